#include "catn/compressor.hpp"

#include "catn/linalg.hpp"
#include "catn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace catn {

void CompressionConfig::validate() const {
  if (!(energy > 0.0 && energy <= 1.0)) {
    throw std::invalid_argument("CompressionConfig: energy must lie in (0, 1]");
  }
  if (!(zero_unit_tol >= 0.0)) throw std::invalid_argument("CompressionConfig: zero_unit_tol must be nonnegative");
  if (!(zero_sv_rel_tol >= 0.0 && zero_sv_rel_tol < 1.0)) {
    throw std::invalid_argument("CompressionConfig: zero_sv_rel_tol must lie in [0, 1)");
  }
}

Index select_rank_by_energy(const Vector& singular_values, double energy, double rel_tol) {
  if (!(energy > 0.0 && energy <= 1.0)) {
    throw std::invalid_argument("select_rank_by_energy: energy must lie in (0, 1]");
  }
  for (Index j = 0; j < singular_values.size(); ++j) {
    if (!(singular_values(j) >= 0.0)) {
      throw std::invalid_argument("select_rank_by_energy: negative or non-finite value at " +
                                  std::to_string(j));
    }
    if (j > 0 && singular_values(j) > singular_values(j - 1)) {
      throw std::invalid_argument("select_rank_by_energy: values not sorted nonincreasing at " +
                                  std::to_string(j));
    }
  }
  if (singular_values.size() == 0 || singular_values(0) == 0.0) return 0;
  const double cutoff = rel_tol * singular_values(0);
  Index kept = 0;
  double total = 0.0;
  while (kept < singular_values.size() && singular_values(kept) > cutoff) {
    total += singular_values(kept);
    ++kept;
  }
  // Relative guard so that energy == 1 always selects every kept value.
  const double target = energy * total - 1e-12 * total;
  double prefix = 0.0;
  for (Index r = 0; r < kept; ++r) {
    prefix += singular_values(r);
    if (prefix >= target) return r + 1;
  }
  return kept;
}

Index count_layer_params(const Layer& layer) {
  if (layer.is_parametric()) return layer.weights.size() + layer.bias.size();
  if (layer.kind == LayerKind::batchnorm) return 2 * layer.bn_channels();
  return 0;
}

Index count_params(const Network& net) {
  Index total = 0;
  for (const Layer& layer : net.layers) total += count_layer_params(layer);
  return total;
}

Index count_layer_macs(const Layer& layer, const Shape3& input, std::size_t layer_index) {
  if (layer.is_conv()) {
    const Shape3 out = output_shape(layer, input, layer_index);
    return out.pixels() * layer.in_channels() * layer.out_units() * layer.kernel_h() *
           layer.kernel_w();
  }
  if (layer.kind == LayerKind::dense) return layer.in_channels() * layer.out_units();
  return 0;
}

Index count_macs(const Network& net, const Shape3& input_shape) {
  Index total = 0;
  Shape3 current = input_shape;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    total += count_layer_macs(net.layers[i], current, i);
    current = output_shape(net.layers[i], current, i);
  }
  return total;
}

std::vector<Index> zeroed_units(const Network& net, double tol) {
  std::vector<Index> out(net.layers.size(), 0);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].is_parametric()) continue;
    const Matrix theta = reshape_kernel_to_matrix(net.layers[i]);
    for (Index k = 0; k < theta.rows(); ++k) {
      if (theta.row(k).norm() <= tol) ++out[i];
    }
  }
  return out;
}

namespace {

Tensor4 drop_axis(const Tensor4& t, int axis, const std::vector<Index>& drop) {
  std::vector<bool> removed(static_cast<std::size_t>(t.dim(axis)), false);
  for (Index k : drop) removed[static_cast<std::size_t>(k)] = true;
  std::array<Index, 4> d = t.dims();
  d[static_cast<std::size_t>(axis)] -= static_cast<Index>(drop.size());
  Tensor4 out(d[0], d[1], d[2], d[3]);
  double* dst = out.raw();
  for (Index a = 0; a < t.dim(0); ++a) {
    if (axis == 0 && removed[static_cast<std::size_t>(a)]) continue;
    for (Index b = 0; b < t.dim(1); ++b) {
      if (axis == 1 && removed[static_cast<std::size_t>(b)]) continue;
      for (Index c = 0; c < t.dim(2); ++c) {
        for (Index e = 0; e < t.dim(3); ++e) *dst++ = t(a, b, c, e);
      }
    }
  }
  return out;
}

Vector drop_entries(const Vector& v, const std::vector<Index>& drop) {
  if (v.size() == 0) return v;
  std::vector<bool> removed(static_cast<std::size_t>(v.size()), false);
  for (Index k : drop) removed[static_cast<std::size_t>(k)] = true;
  Vector out(v.size() - static_cast<Index>(drop.size()));
  Index pos = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (!removed[static_cast<std::size_t>(i)]) out(pos++) = v(i);
  }
  return out;
}

bool is_passthrough(LayerKind kind) {
  return kind == LayerKind::batchnorm || kind == LayerKind::relu || kind == LayerKind::flatten;
}

}  // namespace

PruneResult prune_zero_units(const Network& net, double tol) {
  PruneResult result;
  result.net = net;
  result.removed_per_layer.assign(net.layers.size(), 0);
  Network& out = result.net;
  const auto param = out.parametric_layers();
  // Spatial extents do not change under pruning.
  const auto shapes = net.shapes();

  for (std::size_t pi = 0; pi + 1 < param.size(); ++pi) {
    const std::size_t producer_index = param[pi];
    const std::size_t consumer_index = param[pi + 1];
    bool chain_ok = true;
    bool flattened = false;
    for (std::size_t m = producer_index + 1; m < consumer_index; ++m) {
      chain_ok = chain_ok && is_passthrough(out.layers[m].kind);
      flattened = flattened || out.layers[m].kind == LayerKind::flatten;
    }
    if (!chain_ok) continue;

    Layer& producer = out.layers[producer_index];
    Layer& consumer = out.layers[consumer_index];
    const Matrix theta = reshape_kernel_to_matrix(producer);
    const Index units = theta.rows();
    std::vector<Index> candidates;
    Index largest = 0;
    for (Index k = 0; k < units; ++k) {
      const double norm = theta.row(k).norm();
      if (norm <= tol) candidates.push_back(k);
      if (norm > theta.row(largest).norm()) largest = k;
    }
    if (candidates.empty()) continue;
    if (static_cast<Index>(candidates.size()) == units) {
      candidates.erase(std::find(candidates.begin(), candidates.end(), largest));
      result.warnings.push_back("layer " + std::to_string(producer_index) +
                                ": every unit is near zero; keeping unit " +
                                std::to_string(largest));
    }

    const Index pixels = shapes[producer_index + 1].pixels();
    const bool consumer_padded = consumer.is_conv() && (consumer.pad_h > 0 || consumer.pad_w > 0);
    std::vector<Index> removable;
    std::vector<double> constants;
    for (Index k : candidates) {
      double c = producer.has_bias() ? producer.bias(k) : 0.0;
      for (std::size_t m = producer_index + 1; m < consumer_index; ++m) {
        const Layer& mid = out.layers[m];
        if (mid.kind == LayerKind::batchnorm) {
          c = mid.gamma(k) * (c - mid.running_mean(k)) /
                  std::sqrt(mid.running_var(k) + kBatchNormEps) +
              mid.beta(k);
        } else if (mid.kind == LayerKind::relu) {
          c = c > 0.0 ? c : 0.0;
        }
      }
      if (c != 0.0 && (!consumer.has_bias() || consumer_padded)) continue;
      removable.push_back(k);
      constants.push_back(c);
    }
    if (removable.empty()) continue;

    // Fold constant feature maps into the consumer's bias.
    for (std::size_t r = 0; r < removable.size(); ++r) {
      const double c = constants[r];
      if (c == 0.0) continue;
      const Index k = removable[r];
      for (Index o = 0; o < consumer.out_units(); ++o) {
        double sum = 0.0;
        if (flattened) {
          for (Index p = 0; p < pixels; ++p) sum += consumer.weights(o, k * pixels + p, 0, 0);
        } else {
          for (Index h = 0; h < consumer.kernel_h(); ++h) {
            for (Index w = 0; w < consumer.kernel_w(); ++w) sum += consumer.weights(o, k, h, w);
          }
        }
        consumer.bias(o) += c * sum;
      }
    }

    producer.weights = drop_axis(producer.weights, 0, removable);
    producer.bias = drop_entries(producer.bias, removable);
    for (std::size_t m = producer_index + 1; m < consumer_index; ++m) {
      Layer& mid = out.layers[m];
      if (mid.kind != LayerKind::batchnorm) continue;
      mid.gamma = drop_entries(mid.gamma, removable);
      mid.beta = drop_entries(mid.beta, removable);
      mid.running_mean = drop_entries(mid.running_mean, removable);
      mid.running_var = drop_entries(mid.running_var, removable);
    }
    if (flattened) {
      std::vector<Index> columns;
      for (Index k : removable) {
        for (Index p = 0; p < pixels; ++p) columns.push_back(k * pixels + p);
      }
      consumer.weights = drop_axis(consumer.weights, 1, columns);
    } else {
      consumer.weights = drop_axis(consumer.weights, 1, removable);
    }
    result.removed_per_layer[producer_index] = static_cast<Index>(removable.size());
  }
  return result;
}

std::pair<Layer, Layer> factorize_layer(const Layer& layer, Index rank) {
  if (!layer.is_parametric()) {
    throw std::invalid_argument("factorize_layer: layer kind " + to_string(layer.kind) +
                                " has no kernel");
  }
  const Index units = layer.out_units();
  const Index size = layer.unit_size();
  if (rank < 1) throw std::invalid_argument("factorize_layer: rank must be at least 1");
  if (rank > std::min(units, size)) {
    throw std::invalid_argument("factorize_layer: rank " + std::to_string(rank) +
                                " exceeds min(K, S) = " + std::to_string(std::min(units, size)));
  }
  const auto dec = svd(reshape_kernel_to_matrix(layer));

  Layer basis;
  if (layer.kind == LayerKind::dense) {
    basis = make_dense(size, rank, false);
  } else {
    basis = make_conv(layer.kind, layer.in_channels(), rank, layer.kernel_h(), layer.kernel_w(),
                      layer.stride, layer.pad_h, layer.pad_w, false);
  }
  assign_kernel_from_matrix(basis, dec.Vt.topRows(rank));
  basis.regularized = layer.regularized;
  basis.role = FactorRole::basis;

  Layer mixing;
  if (layer.kind == LayerKind::dense) {
    mixing = make_dense(rank, units, layer.has_bias());
  } else {
    mixing = make_conv(LayerKind::conv2d, rank, units, 1, 1, 1, 0, 0, layer.has_bias());
  }
  assign_kernel_from_matrix(
      mixing, dec.U.leftCols(rank) * dec.singular_values.head(rank).asDiagonal());
  if (layer.has_bias()) mixing.bias = layer.bias;
  mixing.regularized = layer.regularized;
  mixing.role = FactorRole::mixing;
  return {std::move(basis), std::move(mixing)};
}

std::pair<Network, CompressionReport> compress_network(const Network& net,
                                                       const CompressionConfig& cfg) {
  cfg.validate();
  net.validate();
  CompressionReport report;
  report.config = cfg;

  PruneResult pruned = prune_zero_units(net, cfg.zero_unit_tol);
  report.warnings = pruned.warnings;
  const auto shapes_before = net.shapes();
  const auto shapes_after = pruned.net.shapes();

  Network out;
  out.input_shape = net.input_shape;
  for (std::size_t i = 0; i < pruned.net.layers.size(); ++i) {
    const Layer& original = net.layers[i];
    const Layer& layer = pruned.net.layers[i];
    LayerCompression entry;
    entry.layer_index = i;
    entry.kind = original.kind;
    entry.params_before = count_layer_params(original);
    entry.macs_before = count_layer_macs(original, shapes_before[i], i);
    if (original.is_parametric()) {
      entry.units = original.out_units();
      entry.in_channels = original.in_channels();
      entry.kept_units = layer.out_units();
      entry.kept_channels = layer.in_channels();
    } else if (original.kind == LayerKind::batchnorm) {
      entry.units = entry.in_channels = original.bn_channels();
      entry.kept_units = entry.kept_channels = layer.bn_channels();
    }

    bool factorize = false;
    if (layer.is_parametric()) {
      const Vector sigma = svd(reshape_kernel_to_matrix(layer)).singular_values;
      if (layer.role == FactorRole::none) {
        entry.rank = select_rank_by_energy(sigma, cfg.energy, cfg.zero_sv_rel_tol);
        const Index k_hat = layer.out_units();
        const Index s_hat = layer.unit_size();
        factorize = entry.rank >= 1 && entry.rank * (s_hat + k_hat) < s_hat * k_hat;
      } else {
        entry.rank = effective_rank_of_values(sigma, cfg.zero_sv_rel_tol);
      }
    }

    if (factorize) {
      auto [basis, mixing] = factorize_layer(layer, entry.rank);
      entry.factorized = true;
      entry.params_after = count_layer_params(basis) + count_layer_params(mixing);
      const Shape3 mid = output_shape(basis, shapes_after[i], i);
      entry.macs_after = count_layer_macs(basis, shapes_after[i], i) +
                         count_layer_macs(mixing, mid, i);
      out.layers.push_back(std::move(basis));
      out.layers.push_back(std::move(mixing));
    } else {
      entry.params_after = count_layer_params(layer);
      entry.macs_after = count_layer_macs(layer, shapes_after[i], i);
      out.layers.push_back(layer);
    }
    report.params_before += entry.params_before;
    report.params_after += entry.params_after;
    report.macs_before += entry.macs_before;
    report.macs_after += entry.macs_after;
    report.layers.push_back(entry);
  }
  out.validate();
  return {std::move(out), std::move(report)};
}

}  // namespace catn
