#pragma once

#include "catn/linalg.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace catn {

/// (channels, height, width) of one sample's feature map.
struct Shape3 {
  Index channels = 0;
  Index height = 0;
  Index width = 0;

  Index size() const { return channels * height * width; }
  Index pixels() const { return height * width; }
  bool operator==(const Shape3&) const = default;
  std::string str() const;
};

/// Dense 4-D block stored row-major: (n0, n1, n2, n3) with n3 fastest.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(Index n0, Index n1, Index n2, Index n3, double fill = 0.0);

  const std::array<Index, 4>& dims() const { return dims_; }
  Index dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  Index offset(Index i0, Index i1, Index i2, Index i3) const {
    return ((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3;
  }
  double& operator()(Index i0, Index i1, Index i2, Index i3) {
    return data_[static_cast<std::size_t>(offset(i0, i1, i2, i3))];
  }
  double operator()(Index i0, Index i1, Index i2, Index i3) const {
    return data_[static_cast<std::size_t>(offset(i0, i1, i2, i3))];
  }

  /// Sample shape (n1, n2, n3).
  Shape3 sample_shape() const { return {dims_[1], dims_[2], dims_[3]}; }
  /// Same data, new dims; total size must match.
  Tensor4 reshaped(Index n0, Index n1, Index n2, Index n3) const;
  void set_zero();
  bool all_finite() const;
  std::string dims_str() const;

  bool operator==(const Tensor4&) const = default;

 private:
  std::array<Index, 4> dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

}  // namespace catn
