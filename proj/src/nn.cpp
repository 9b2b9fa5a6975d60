#include "catn/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace catn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  Index channels, height, width;
  Index kernel_h, kernel_w, stride, pad_h, pad_w;
  Index out_h, out_w;
  Index pixels() const { return out_h * out_w; }
  Index patch() const { return channels * kernel_h * kernel_w; }
};

ConvGeometry geometry(const Layer& layer, const Shape3& in) {
  ConvGeometry g{in.channels, in.height, in.width, layer.kernel_h(), layer.kernel_w(),
                 layer.stride, layer.pad_h, layer.pad_w, 0, 0};
  g.out_h = (in.height + 2 * g.pad_h - g.kernel_h) / g.stride + 1;
  g.out_w = (in.width + 2 * g.pad_w - g.kernel_w) / g.stride + 1;
  return g;
}

Matrix im2col(const Tensor4& input, const ConvGeometry& g) {
  const Index n_samples = input.dim(0);
  const Index pixels = g.pixels();
  Matrix cols = Matrix::Zero(g.patch(), n_samples * pixels);
  for (Index n = 0; n < n_samples; ++n) {
    for (Index c = 0; c < g.channels; ++c) {
      for (Index i = 0; i < g.kernel_h; ++i) {
        for (Index j = 0; j < g.kernel_w; ++j) {
          const Index row = (c * g.kernel_h + i) * g.kernel_w + j;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index y = oy * g.stride - g.pad_h + i;
            if (y < 0 || y >= g.height) continue;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index x = ox * g.stride - g.pad_w + j;
              if (x < 0 || x >= g.width) continue;
              cols(row, n * pixels + oy * g.out_w + ox) = input(n, c, y, x);
            }
          }
        }
      }
    }
  }
  return cols;
}

void col2im_add(const Matrix& dcols, const ConvGeometry& g, Tensor4& dinput) {
  const Index n_samples = dinput.dim(0);
  const Index pixels = g.pixels();
  for (Index n = 0; n < n_samples; ++n) {
    for (Index c = 0; c < g.channels; ++c) {
      for (Index i = 0; i < g.kernel_h; ++i) {
        for (Index j = 0; j < g.kernel_w; ++j) {
          const Index row = (c * g.kernel_h + i) * g.kernel_w + j;
          for (Index oy = 0; oy < g.out_h; ++oy) {
            const Index y = oy * g.stride - g.pad_h + i;
            if (y < 0 || y >= g.height) continue;
            for (Index ox = 0; ox < g.out_w; ++ox) {
              const Index x = ox * g.stride - g.pad_w + j;
              if (x < 0 || x >= g.width) continue;
              dinput(n, c, y, x) += dcols(row, n * pixels + oy * g.out_w + ox);
            }
          }
        }
      }
    }
  }
}

ConstRowMap weight_matrix(const Layer& layer) {
  return ConstRowMap(layer.weights.raw(), layer.out_units(), layer.unit_size());
}

Tensor4 conv_forward(const Layer& layer, const Tensor4& input, LayerCache& cache) {
  const ConvGeometry g = geometry(layer, input.sample_shape());
  cache.columns = im2col(input, g);
  const Matrix y = weight_matrix(layer) * cache.columns;
  const Index n_samples = input.dim(0);
  const Index pixels = g.pixels();
  const Index units = layer.out_units();
  Tensor4 out(n_samples, units, g.out_h, g.out_w);
  double* dst = out.raw();
  for (Index n = 0; n < n_samples; ++n) {
    for (Index k = 0; k < units; ++k) {
      const double b = layer.has_bias() ? layer.bias(k) : 0.0;
      for (Index p = 0; p < pixels; ++p) {
        *dst++ = y(k, n * pixels + p) + b;
      }
    }
  }
  return out;
}

Tensor4 dense_forward(const Layer& layer, const Tensor4& input) {
  const Index n_samples = input.dim(0);
  const Index units = layer.out_units();
  const ConstRowMap x(input.raw(), n_samples, layer.in_channels());
  Tensor4 out(n_samples, units, 1, 1);
  RowMap y(out.raw(), n_samples, units);
  y.noalias() = x * weight_matrix(layer).transpose();
  if (layer.has_bias()) y.rowwise() += layer.bias.transpose();
  return out;
}

Tensor4 batchnorm_forward(const Layer& layer, const Tensor4& input, Mode mode,
                          LayerCache& cache) {
  const Index n_samples = input.dim(0);
  const Index channels = input.dim(1);
  const Index pixels = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n_samples * pixels);
  cache.inv_std.resize(channels);
  if (mode == Mode::train) {
    cache.batch_mean = Vector::Zero(channels);
    cache.batch_var = Vector::Zero(channels);
    for (Index c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (Index n = 0; n < n_samples; ++n) {
        const double* src = input.raw() + input.offset(n, c, 0, 0);
        for (Index p = 0; p < pixels; ++p) sum += src[p];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (Index n = 0; n < n_samples; ++n) {
        const double* src = input.raw() + input.offset(n, c, 0, 0);
        for (Index p = 0; p < pixels; ++p) sq += (src[p] - mean) * (src[p] - mean);
      }
      cache.batch_mean(c) = mean;
      cache.batch_var(c) = sq / count;
    }
  }
  const Vector& mean = mode == Mode::train ? cache.batch_mean : layer.running_mean;
  const Vector& var = mode == Mode::train ? cache.batch_var : layer.running_var;
  cache.normalized = Tensor4(input.dim(0), input.dim(1), input.dim(2), input.dim(3));
  Tensor4 out(input.dim(0), input.dim(1), input.dim(2), input.dim(3));
  for (Index c = 0; c < channels; ++c) {
    const double inv = 1.0 / std::sqrt(var(c) + kBatchNormEps);
    cache.inv_std(c) = inv;
    for (Index n = 0; n < n_samples; ++n) {
      const Index base = input.offset(n, c, 0, 0);
      for (Index p = 0; p < pixels; ++p) {
        const double xhat = (input.raw()[base + p] - mean(c)) * inv;
        cache.normalized.raw()[base + p] = xhat;
        out.raw()[base + p] = layer.gamma(c) * xhat + layer.beta(c);
      }
    }
  }
  return out;
}

Matrix logits_from(const Tensor4& out) {
  const Index n_samples = out.dim(0);
  const Index classes = out.dim(1) * out.dim(2) * out.dim(3);
  return ConstRowMap(out.raw(), n_samples, classes);
}

void check_input(const Network& net, const Tensor4& batch) {
  if (batch.sample_shape() != net.input_shape) {
    std::ostringstream msg;
    msg << "forward: expected input " << net.input_shape.str() << ", got "
        << batch.sample_shape().str();
    throw std::invalid_argument(msg.str());
  }
  if (batch.dim(0) < 1) throw std::invalid_argument("forward: empty batch");
}

}  // namespace

ForwardResult forward(const Network& net, const Tensor4& batch, Mode mode) {
  check_input(net, batch);
  if (mode == Mode::train && batch.dim(0) < 2) {
    for (const Layer& layer : net.layers) {
      if (layer.kind == LayerKind::batchnorm) {
        throw std::invalid_argument("forward: batchnorm in train mode needs batch size >= 2");
      }
    }
  }
  ForwardResult result;
  result.cache.mode = mode;
  result.cache.batch_size = batch.dim(0);
  result.cache.layers.resize(net.layers.size());
  Tensor4 current = batch;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    LayerCache& cache = result.cache.layers[i];
    // Throws with the layer index on a shape mismatch.
    output_shape(layer, current.sample_shape(), i);
    Tensor4 next;
    switch (layer.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv1d_vertical:
      case LayerKind::conv1d_horizontal:
        next = conv_forward(layer, current, cache);
        break;
      case LayerKind::dense:
        next = dense_forward(layer, current);
        break;
      case LayerKind::batchnorm:
        next = batchnorm_forward(layer, current, mode, cache);
        break;
      case LayerKind::relu:
        next = current;
        for (double& v : next.data()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::flatten:
        next = current.reshaped(current.dim(0), current.sample_shape().size(), 1, 1);
        break;
    }
    cache.input = std::move(current);
    current = std::move(next);
  }
  result.logits = logits_from(current);
  return result;
}

void update_running_stats(Network& net, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Layer& layer = net.layers[i];
    if (layer.kind != LayerKind::batchnorm) continue;
    const LayerCache& lc = cache.layers[i];
    const Tensor4& in = lc.input;
    const double count = static_cast<double>(in.dim(0) * in.dim(2) * in.dim(3));
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    layer.running_mean = (1.0 - momentum) * layer.running_mean + momentum * lc.batch_mean;
    layer.running_var =
        (1.0 - momentum) * layer.running_var + (momentum * unbias) * lc.batch_var;
  }
}

ForwardResult forward_train(Network& net, const Tensor4& batch) {
  ForwardResult result = forward(net, batch, Mode::train);
  update_running_stats(net, result.cache);
  return result;
}

Matrix infer(const Network& net, const Tensor4& batch) {
  return forward(net, batch, Mode::eval).logits;
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    const auto shifted = (logits.row(r).array() - top).exp();
    out.row(r) = shifted / shifted.sum();
  }
  return out;
}

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Index n = logits.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("cross_entropy: label count differs from batch size");
  }
  if (n == 0) throw std::invalid_argument("cross_entropy: empty batch");
  LossResult result;
  result.dlogits.resize(n, logits.cols());
  double total = 0.0;
  for (Index r = 0; r < n; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= logits.cols()) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                  " at row " + std::to_string(r) + " out of range");
    }
    const double top = logits.row(r).maxCoeff();
    const double lse = top + std::log((logits.row(r).array() - top).exp().sum());
    total += lse - logits(r, label);
    for (Index c = 0; c < logits.cols(); ++c) {
      result.dlogits(r, c) = std::exp(logits(r, c) - lse);
    }
    result.dlogits(r, label) -= 1.0;
  }
  result.loss = total / static_cast<double>(n);
  result.dlogits /= static_cast<double>(n);
  return result;
}

GradientSet zero_gradients(const Network& net) {
  GradientSet grads(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (layer.is_parametric()) {
      const auto& d = layer.weights.dims();
      grads[i].weights = Tensor4(d[0], d[1], d[2], d[3]);
      grads[i].bias = Vector::Zero(layer.bias.size());
    } else if (layer.kind == LayerKind::batchnorm) {
      grads[i].gamma = Vector::Zero(layer.bn_channels());
      grads[i].beta = Vector::Zero(layer.bn_channels());
    }
  }
  return grads;
}

GradientSet backward(const Network& net, const ForwardCache& cache, const Matrix& dlogits) {
  if (cache.layers.size() != net.layers.size()) {
    throw std::invalid_argument("backward: cache does not match network layer count");
  }
  if (dlogits.rows() != cache.batch_size) {
    throw std::invalid_argument("backward: dlogits rows differ from cached batch size");
  }
  GradientSet grads = zero_gradients(net);
  const auto shapes = net.shapes();
  if (dlogits.cols() != shapes.back().size()) {
    throw std::invalid_argument("backward: dlogits columns differ from class count");
  }
  const Index n_samples = cache.batch_size;
  Tensor4 dout(n_samples, shapes.back().channels, 1, 1);
  RowMap(dout.raw(), n_samples, dlogits.cols()) = dlogits;

  for (std::size_t idx = net.layers.size(); idx-- > 0;) {
    const Layer& layer = net.layers[idx];
    const LayerCache& lc = cache.layers[idx];
    const Tensor4& input = lc.input;
    if (input.sample_shape() != shapes[idx] || input.dim(0) != n_samples) {
      throw std::invalid_argument("backward: stale cache at layer " + std::to_string(idx));
    }
    Tensor4 dinput(input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    switch (layer.kind) {
      case LayerKind::conv2d:
      case LayerKind::conv1d_vertical:
      case LayerKind::conv1d_horizontal: {
        const ConvGeometry g = geometry(layer, input.sample_shape());
        const Index pixels = g.pixels();
        const Index units = layer.out_units();
        if (lc.columns.rows() != g.patch() || lc.columns.cols() != n_samples * pixels) {
          throw std::invalid_argument("backward: stale conv cache at layer " + std::to_string(idx));
        }
        Matrix dy(units, n_samples * pixels);
        const double* src = dout.raw();
        for (Index n = 0; n < n_samples; ++n) {
          for (Index k = 0; k < units; ++k) {
            for (Index p = 0; p < pixels; ++p) dy(k, n * pixels + p) = *src++;
          }
        }
        RowMap(grads[idx].weights.raw(), units, g.patch()).noalias() =
            dy * lc.columns.transpose();
        if (layer.has_bias()) grads[idx].bias = dy.rowwise().sum();
        const Matrix dcols = weight_matrix(layer).transpose() * dy;
        col2im_add(dcols, g, dinput);
        break;
      }
      case LayerKind::dense: {
        const Index units = layer.out_units();
        const ConstRowMap dy(dout.raw(), n_samples, units);
        const ConstRowMap x(input.raw(), n_samples, layer.in_channels());
        RowMap(grads[idx].weights.raw(), units, layer.in_channels()).noalias() =
            dy.transpose() * x;
        if (layer.has_bias()) grads[idx].bias = dy.colwise().sum().transpose();
        RowMap(dinput.raw(), n_samples, layer.in_channels()).noalias() =
            dy * weight_matrix(layer);
        break;
      }
      case LayerKind::batchnorm: {
        const Index channels = input.dim(1);
        const Index pixels = input.dim(2) * input.dim(3);
        const double count = static_cast<double>(n_samples * pixels);
        for (Index c = 0; c < channels; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (Index n = 0; n < n_samples; ++n) {
            const Index base = input.offset(n, c, 0, 0);
            for (Index p = 0; p < pixels; ++p) {
              sum_dy += dout.raw()[base + p];
              sum_dy_xhat += dout.raw()[base + p] * lc.normalized.raw()[base + p];
            }
          }
          grads[idx].gamma(c) = sum_dy_xhat;
          grads[idx].beta(c) = sum_dy;
          const double scale = layer.gamma(c) * lc.inv_std(c);
          for (Index n = 0; n < n_samples; ++n) {
            const Index base = input.offset(n, c, 0, 0);
            for (Index p = 0; p < pixels; ++p) {
              const double dy = dout.raw()[base + p];
              if (cache.mode == Mode::train) {
                const double xhat = lc.normalized.raw()[base + p];
                dinput.raw()[base + p] =
                    scale * (dy - sum_dy / count - xhat * sum_dy_xhat / count);
              } else {
                dinput.raw()[base + p] = scale * dy;
              }
            }
          }
        }
        break;
      }
      case LayerKind::relu: {
        for (Index i = 0; i < input.size(); ++i) {
          dinput.raw()[i] = input.raw()[i] > 0.0 ? dout.raw()[i] : 0.0;
        }
        break;
      }
      case LayerKind::flatten:
        dinput = dout.reshaped(input.dim(0), input.dim(1), input.dim(2), input.dim(3));
        break;
    }
    dout = std::move(dinput);
  }
  return grads;
}

void sgd_step(Network& net, const GradientSet& grads, MomentumState& state,
              const SgdParams& params) {
  if (!(params.lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  if (!(params.momentum >= 0.0 && params.momentum < 1.0)) {
    throw std::invalid_argument("sgd_step: momentum must lie in [0, 1)");
  }
  if (!(params.weight_decay >= 0.0)) {
    throw std::invalid_argument("sgd_step: weight_decay must be nonnegative");
  }
  if (grads.size() != net.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient set does not match network");
  }
  if (state.size() != net.layers.size()) state = zero_gradients(net);

  auto fail_nonfinite = [](std::size_t i, const char* what) {
    throw std::domain_error("sgd_step: non-finite " + std::string(what) +
                            " gradient at layer " + std::to_string(i));
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Layer& layer = net.layers[i];
    const LayerGradient& g = grads[i];
    LayerGradient& v = state[i];
    if (layer.is_parametric()) {
      if (!g.weights.all_finite()) fail_nonfinite(i, "weight");
      if (!g.bias.allFinite()) fail_nonfinite(i, "bias");
      auto w = layer.weights.data();
      auto gw = g.weights.data();
      auto vw = v.weights.data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        vw[j] = params.momentum * vw[j] + gw[j] + params.weight_decay * w[j];
        w[j] -= params.lr * vw[j];
      }
      if (layer.has_bias()) {
        v.bias = params.momentum * v.bias + g.bias;
        layer.bias -= params.lr * v.bias;
      }
    } else if (layer.kind == LayerKind::batchnorm) {
      if (!g.gamma.allFinite() || !g.beta.allFinite()) fail_nonfinite(i, "batchnorm");
      v.gamma = params.momentum * v.gamma + g.gamma;
      v.beta = params.momentum * v.beta + g.beta;
      layer.gamma -= params.lr * v.gamma;
      layer.beta -= params.lr * v.beta;
    }
  }
}

Matrix reshape_kernel_to_matrix(const Layer& layer) {
  if (!layer.is_parametric()) {
    throw std::invalid_argument("reshape_kernel_to_matrix: layer kind " +
                                to_string(layer.kind) + " has no kernel");
  }
  return weight_matrix(layer);
}

void assign_kernel_from_matrix(Layer& layer, const Matrix& theta) {
  if (!layer.is_parametric()) {
    throw std::invalid_argument("assign_kernel_from_matrix: layer kind " +
                                to_string(layer.kind) + " has no kernel");
  }
  if (theta.rows() != layer.out_units() || theta.cols() != layer.unit_size()) {
    throw std::invalid_argument("assign_kernel_from_matrix: expected " +
                                std::to_string(layer.out_units()) + "x" +
                                std::to_string(layer.unit_size()) + " matrix");
  }
  RowMap(layer.weights.raw(), theta.rows(), theta.cols()) = theta;
}

Index argmax_row(const Matrix& logits, Index row) {
  Index best = 0;
  for (Index c = 1; c < logits.cols(); ++c) {
    if (logits(row, c) > logits(row, best)) best = c;
  }
  return best;
}

std::vector<int> predict(const Network& net, const Tensor4& batch) {
  const Matrix logits = infer(net, batch);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = static_cast<int>(argmax_row(logits, r));
  }
  return out;
}

}  // namespace catn
