#pragma once

// Small network builders and the layer grid shared by the gradient tests.

#include "catn/network.hpp"

#include <string>
#include <vector>

namespace catn::grid {

inline Network chain(Shape3 in, std::vector<Layer> layers) {
  Network net;
  net.input_shape = in;
  net.layers = std::move(layers);
  net.validate();
  return net;
}

/// Appends flatten -> dense(classes) so the network emits logits.
inline Network with_head(Shape3 in, std::vector<Layer> body, Index classes = 3) {
  Network probe;
  probe.input_shape = in;
  probe.layers = body;
  const Shape3 out = probe.shapes().back();
  body.push_back(make_flatten());
  body.push_back(make_dense(out.size(), classes));
  return chain(in, std::move(body));
}

inline std::vector<int> labels_for(Index n, int classes) {
  std::vector<int> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % classes));
  return labels;
}

struct GridCase {
  std::string name;
  Shape3 in;
  std::vector<Layer> body;
};

inline std::vector<GridCase> gradient_grid() {
  std::vector<GridCase> cases;
  for (Index stride : {1, 2}) {
    for (Index pad : {0, 1}) {
      for (Index k : {1, 3}) {
        const std::string tag = "s" + std::to_string(stride) + "p" + std::to_string(pad) + "k" + std::to_string(k);
        cases.push_back({"conv2d_" + tag, {2, 5, 6}, {make_conv(LayerKind::conv2d, 2, 3, k, k, stride, pad, pad, true)}});
        cases.push_back({"conv1d_vertical_" + tag, {2, 6, 4},
                         {make_conv(LayerKind::conv1d_vertical, 2, 3, k, 1, stride, pad, 0, true)}});
        cases.push_back({"conv1d_horizontal_" + tag, {2, 4, 6},
                         {make_conv(LayerKind::conv1d_horizontal, 2, 3, 1, k, stride, 0, pad, true)}});
      }
    }
  }
  cases.push_back({"conv2d_nobias_rect", {1, 7, 5}, {make_conv(LayerKind::conv2d, 1, 2, 3, 2, 2, 1, 0, false)}});
  cases.push_back({"dense", {6, 1, 1}, {make_dense(6, 4), make_relu()}});
  cases.push_back({"dense_nobias", {6, 1, 1}, {make_dense(6, 4, false)}});
  cases.push_back({"batchnorm", {3, 3, 3}, {make_batchnorm(3)}});
  cases.push_back({"conv_bn_relu", {2, 5, 5}, {make_conv2d(2, 3, 3, 1, 1), make_batchnorm(3), make_relu()}});
  cases.push_back({"decomposed_block", {2, 6, 6},
                   {make_conv1d_vertical(2, 3, 3, 1), make_batchnorm(3), make_relu(),
                    make_conv1d_horizontal(3, 4, 3, 1), make_batchnorm(4), make_relu()}});
  cases.push_back({"relu_flatten", {2, 3, 3}, {make_relu()}});
  return cases;
}

}  // namespace catn::grid
