#pragma once

#include "catn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace catn {

enum class LayerKind : std::uint8_t {
  conv2d = 0,
  conv1d_vertical = 1,
  conv1d_horizontal = 2,
  dense = 3,
  batchnorm = 4,
  relu = 5,
  flatten = 6,
};

/// Marks the two halves emitted by low-rank factorization so that a second
/// compression pass leaves them alone.
enum class FactorRole : std::uint8_t { none = 0, basis = 1, mixing = 2 };

std::string to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(const std::string& name);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// One layer of a feed-forward network.
///
/// Parametric kinds store weights as (K, C, kh, kw): conv2d (K,C,dH,dW),
/// conv1d_vertical (L,C,dV,1), conv1d_horizontal (K,L,1,dH), dense (K,S,1,1).
/// bias is either empty or of length K.
struct Layer {
  LayerKind kind = LayerKind::relu;
  Tensor4 weights;
  Vector bias;
  Index stride = 1;
  Index pad_h = 0;
  Index pad_w = 0;

  // batchnorm only
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;

  /// Subject to the prox regularizers.
  bool regularized = false;
  FactorRole role = FactorRole::none;

  bool is_parametric() const;
  bool is_conv() const;
  bool has_bias() const { return bias.size() > 0; }
  Index out_units() const { return weights.dim(0); }
  Index in_channels() const { return weights.dim(1); }
  Index kernel_h() const { return weights.dim(2); }
  Index kernel_w() const { return weights.dim(3); }
  /// Row length of the reshaped parameter matrix, C * kh * kw.
  Index unit_size() const { return in_channels() * kernel_h() * kernel_w(); }
  Index bn_channels() const { return gamma.size(); }

  bool operator==(const Layer& other) const;
};

Layer make_conv(LayerKind kind, Index in_channels, Index out_channels,
                Index kernel_h, Index kernel_w, Index stride, Index pad_h,
                Index pad_w, bool with_bias = true);
Layer make_conv2d(Index in_channels, Index out_channels, Index kernel,
                  Index stride = 1, Index padding = 0, bool with_bias = true);
/// Vertical dV x 1 kernel, padded vertically only.
Layer make_conv1d_vertical(Index in_channels, Index out_channels, Index kernel,
                           Index padding = 0);
/// Horizontal 1 x dH kernel, padded horizontally only.
Layer make_conv1d_horizontal(Index in_channels, Index out_channels,
                             Index kernel, Index padding = 0);
Layer make_dense(Index in_features, Index out_features, bool with_bias = true);
Layer make_batchnorm(Index channels);
Layer make_relu();
Layer make_flatten();

/// Output feature-map shape of layer given its input shape; throws
/// std::invalid_argument naming layer_index on mismatch.
Shape3 output_shape(const Layer& layer, const Shape3& input, std::size_t layer_index);

struct Network {
  Shape3 input_shape;
  std::vector<Layer> layers;

  /// shapes()[i] is the input of layer i; shapes().back() the network output.
  std::vector<Shape3> shapes() const;
  Index class_count() const;
  /// Checks the shape chain and per-layer invariants.
  void validate() const;
  /// Indices of parametric layers in order.
  std::vector<std::size_t> parametric_layers() const;
  std::vector<std::size_t> regularized_layers() const;

  bool operator==(const Network& other) const = default;
};

/// He-uniform fan-in initialization for weights; biases zero; BN identity.
void he_uniform_init(Network& net, std::uint64_t seed);

}  // namespace catn
