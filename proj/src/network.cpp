#include "catn/network.hpp"

#include "catn/random.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace catn {

std::string Shape3::str() const {
  std::ostringstream out;
  out << "(" << channels << "," << height << "," << width << ")";
  return out.str();
}

Tensor4::Tensor4(Index n0, Index n1, Index n2, Index n3, double fill)
    : dims_{n0, n1, n2, n3} {
  if (n0 < 0 || n1 < 0 || n2 < 0 || n3 < 0) {
    throw std::invalid_argument("Tensor4: negative dimension");
  }
  data_.assign(static_cast<std::size_t>(n0 * n1 * n2 * n3), fill);
}

Tensor4 Tensor4::reshaped(Index n0, Index n1, Index n2, Index n3) const {
  if (n0 * n1 * n2 * n3 != size()) {
    throw std::invalid_argument("Tensor4::reshaped: size mismatch " + dims_str());
  }
  Tensor4 out = *this;
  out.dims_ = {n0, n1, n2, n3};
  return out;
}

void Tensor4::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Tensor4::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor4::dims_str() const {
  std::ostringstream out;
  out << "(" << dims_[0] << "," << dims_[1] << "," << dims_[2] << "," << dims_[3] << ")";
  return out.str();
}

namespace {

bool same_vector(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return false;
  }
  return true;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv1d_vertical: return "conv1d_vertical";
    case LayerKind::conv1d_horizontal: return "conv1d_horizontal";
    case LayerKind::dense: return "dense";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

std::optional<LayerKind> layer_kind_from_string(const std::string& name) {
  for (auto kind : {LayerKind::conv2d, LayerKind::conv1d_vertical,
                    LayerKind::conv1d_horizontal, LayerKind::dense,
                    LayerKind::batchnorm, LayerKind::relu, LayerKind::flatten}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

bool Layer::is_parametric() const {
  return is_conv() || kind == LayerKind::dense;
}

bool Layer::is_conv() const {
  return kind == LayerKind::conv2d || kind == LayerKind::conv1d_vertical ||
         kind == LayerKind::conv1d_horizontal;
}

bool Layer::operator==(const Layer& other) const {
  return kind == other.kind && weights == other.weights &&
         same_vector(bias, other.bias) && stride == other.stride &&
         pad_h == other.pad_h && pad_w == other.pad_w &&
         same_vector(gamma, other.gamma) && same_vector(beta, other.beta) &&
         same_vector(running_mean, other.running_mean) &&
         same_vector(running_var, other.running_var) &&
         regularized == other.regularized && role == other.role;
}

Layer make_conv(LayerKind kind, Index in_channels, Index out_channels,
                Index kernel_h, Index kernel_w, Index stride, Index pad_h,
                Index pad_w, bool with_bias) {
  if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1 ||
      stride < 1 || pad_h < 0 || pad_w < 0) {
    throw std::invalid_argument("make_conv: invalid geometry");
  }
  Layer layer;
  layer.kind = kind;
  layer.weights = Tensor4(out_channels, in_channels, kernel_h, kernel_w);
  if (with_bias) layer.bias = Vector::Zero(out_channels);
  layer.stride = stride;
  layer.pad_h = pad_h;
  layer.pad_w = pad_w;
  layer.regularized = true;
  return layer;
}

Layer make_conv2d(Index in_channels, Index out_channels, Index kernel,
                  Index stride, Index padding, bool with_bias) {
  return make_conv(LayerKind::conv2d, in_channels, out_channels, kernel, kernel,
                   stride, padding, padding, with_bias);
}

Layer make_conv1d_vertical(Index in_channels, Index out_channels, Index kernel,
                           Index padding) {
  return make_conv(LayerKind::conv1d_vertical, in_channels, out_channels, kernel,
                   1, 1, padding, 0);
}

Layer make_conv1d_horizontal(Index in_channels, Index out_channels,
                             Index kernel, Index padding) {
  return make_conv(LayerKind::conv1d_horizontal, in_channels, out_channels, 1,
                   kernel, 1, 0, padding);
}

Layer make_dense(Index in_features, Index out_features, bool with_bias) {
  if (in_features < 1 || out_features < 1) {
    throw std::invalid_argument("make_dense: invalid size");
  }
  Layer layer;
  layer.kind = LayerKind::dense;
  layer.weights = Tensor4(out_features, in_features, 1, 1);
  if (with_bias) layer.bias = Vector::Zero(out_features);
  layer.regularized = true;
  return layer;
}

Layer make_batchnorm(Index channels) {
  Layer layer;
  layer.kind = LayerKind::batchnorm;
  layer.gamma = Vector::Ones(channels);
  layer.beta = Vector::Zero(channels);
  layer.running_mean = Vector::Zero(channels);
  layer.running_var = Vector::Ones(channels);
  return layer;
}

Layer make_relu() { return Layer{}; }

Layer make_flatten() {
  Layer layer;
  layer.kind = LayerKind::flatten;
  return layer;
}

Shape3 output_shape(const Layer& layer, const Shape3& input, std::size_t layer_index) {
  auto fail = [&](const std::string& expected) {
    std::ostringstream msg;
    msg << "layer " << layer_index << " (" << to_string(layer.kind)
        << "): expected input " << expected << ", got " << input.str();
    throw std::invalid_argument(msg.str());
  };
  switch (layer.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv1d_vertical:
    case LayerKind::conv1d_horizontal: {
      if (input.channels != layer.in_channels()) {
        fail("with " + std::to_string(layer.in_channels()) + " channels");
      }
      const Index oh = input.height + 2 * layer.pad_h - layer.kernel_h();
      const Index ow = input.width + 2 * layer.pad_w - layer.kernel_w();
      if (oh < 0 || ow < 0) fail("at least as large as the kernel");
      return {layer.out_units(), oh / layer.stride + 1, ow / layer.stride + 1};
    }
    case LayerKind::dense:
      if (input.height != 1 || input.width != 1 ||
          input.channels != layer.in_channels()) {
        fail(Shape3{layer.in_channels(), 1, 1}.str());
      }
      return {layer.out_units(), 1, 1};
    case LayerKind::batchnorm:
      if (input.channels != layer.bn_channels()) {
        fail("with " + std::to_string(layer.bn_channels()) + " channels");
      }
      return input;
    case LayerKind::relu:
      return input;
    case LayerKind::flatten:
      return {input.size(), 1, 1};
  }
  return input;
}

std::vector<Shape3> Network::shapes() const {
  std::vector<Shape3> out;
  out.reserve(layers.size() + 1);
  out.push_back(input_shape);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back(output_shape(layers[i], out.back(), i));
  }
  return out;
}

Index Network::class_count() const {
  const Shape3 last = shapes().back();
  return last.size();
}

void Network::validate() const {
  if (input_shape.size() < 1) throw std::invalid_argument("network: empty input shape");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(layer.kind) + ")";
    if (layer.is_parametric()) {
      if (layer.weights.size() == 0) throw std::invalid_argument(where + ": empty weights");
      if (layer.has_bias() && layer.bias.size() != layer.out_units()) {
        throw std::invalid_argument(where + ": bias length differs from unit count");
      }
      if (layer.kind == LayerKind::conv1d_vertical && layer.kernel_w() != 1) {
        throw std::invalid_argument(where + ": vertical kernel must have width 1");
      }
      if (layer.kind == LayerKind::conv1d_horizontal && layer.kernel_h() != 1) {
        throw std::invalid_argument(where + ": horizontal kernel must have height 1");
      }
      if (layer.kind == LayerKind::dense && (layer.kernel_h() != 1 || layer.kernel_w() != 1)) {
        throw std::invalid_argument(where + ": dense weights must be (K,S,1,1)");
      }
    }
    if (layer.kind == LayerKind::batchnorm) {
      const Index c = layer.gamma.size();
      if (layer.beta.size() != c || layer.running_mean.size() != c ||
          layer.running_var.size() != c) {
        throw std::invalid_argument(where + ": inconsistent batchnorm parameter sizes");
      }
      if ((layer.running_var.array() < 0.0).any()) {
        throw std::invalid_argument(where + ": negative running variance");
      }
    }
  }
  const auto all = shapes();
  if (all.back().height != 1 || all.back().width != 1) {
    throw std::invalid_argument("network: output must be a flat class vector, got " +
                                all.back().str());
  }
}

std::vector<std::size_t> Network::parametric_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].is_parametric()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Network::regularized_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].is_parametric() && layers[i].regularized) out.push_back(i);
  }
  return out;
}

void he_uniform_init(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (Layer& layer : net.layers) {
    if (layer.is_parametric()) {
      const double bound = std::sqrt(6.0 / static_cast<double>(layer.unit_size()));
      for (double& w : layer.weights.data()) w = rng.uniform(-bound, bound);
      if (layer.has_bias()) layer.bias.setZero();
    } else if (layer.kind == LayerKind::batchnorm) {
      layer.gamma.setOnes();
      layer.beta.setZero();
      layer.running_mean.setZero();
      layer.running_var.setOnes();
    }
  }
}

}  // namespace catn
