#pragma once

#include "catn/network.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace catn {

struct CompressionConfig {
  double energy = 1.0;  // fraction of the singular-value sum to keep, (0, 1]
  double zero_unit_tol = 1e-6;
  double zero_sv_rel_tol = 1e-7;

  void validate() const;
};

/// Accounting for one layer of the input network. Non-parametric layers
/// appear too so that totals are plain sums.
struct LayerCompression {
  std::size_t layer_index = 0;
  LayerKind kind = LayerKind::relu;
  Index units = 0;           // K
  Index kept_units = 0;      // K hat
  Index in_channels = 0;     // C
  Index kept_channels = 0;   // C hat
  Index rank = 0;            // selected r; 0 for non-parametric layers
  bool factorized = false;
  Index params_before = 0;
  Index params_after = 0;
  Index macs_before = 0;
  Index macs_after = 0;
};

struct CompressionReport {
  CompressionConfig config;
  std::vector<LayerCompression> layers;
  Index params_before = 0;
  Index params_after = 0;
  Index macs_before = 0;
  Index macs_after = 0;
  std::optional<double> accuracy_before;
  std::optional<double> accuracy_after;
  std::vector<std::string> warnings;
};

/// Smallest r whose prefix sum reaches energy times the total of the values
/// above rel_tol * sigma_1. Returns 0 only when every value is zero.
Index select_rank_by_energy(const Vector& singular_values, double energy, double rel_tol);

struct PruneResult {
  Network net;
  std::vector<Index> removed_per_layer;  // indexed like net.layers
  std::vector<std::string> warnings;
};

/// Deletes units whose weight row has L2 norm <= tol, together with the
/// matching batchnorm channels and the consumer's input slices. A removed
/// unit's constant output is folded into the consumer's bias; units whose
/// constant cannot be folded exactly are kept. The classifier head and the
/// last surviving unit of a layer are never removed.
PruneResult prune_zero_units(const Network& net, double tol);

/// Splits a conv-like or dense layer into a basis layer with `rank` output
/// units (no bias) followed by a 1x1 mixing layer carrying the bias.
std::pair<Layer, Layer> factorize_layer(const Layer& layer, Index rank);

/// Pruning, then per-layer energy-based rank selection and factorization
/// wherever r * (C*dH*dW + K) < C*dH*dW*K.
std::pair<Network, CompressionReport> compress_network(const Network& net,
                                                       const CompressionConfig& cfg);

Index count_params(const Network& net);
Index count_layer_params(const Layer& layer);
Index count_macs(const Network& net, const Shape3& input_shape);
Index count_layer_macs(const Layer& layer, const Shape3& input, std::size_t layer_index);

/// Units per layer whose weight row norm is <= tol (0 for non-parametric).
std::vector<Index> zeroed_units(const Network& net, double tol);

}  // namespace catn
