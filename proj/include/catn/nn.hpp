#pragma once

#include "catn/network.hpp"

#include <span>
#include <vector>

namespace catn {

enum class Mode { train, eval };

/// Per-layer record produced by forward and consumed by backward.
struct LayerCache {
  Tensor4 input;
  Matrix columns;      // conv: im2col of the input, (C*kh*kw) x (N*P)
  Tensor4 normalized;  // batchnorm: x_hat
  Vector inv_std;      // batchnorm: 1 / sqrt(var + eps)
  Vector batch_mean;   // batchnorm, train mode
  Vector batch_var;    // batchnorm, train mode (biased)
};

struct ForwardCache {
  Mode mode = Mode::eval;
  Index batch_size = 0;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Matrix logits;  // one row per sample
  ForwardCache cache;
};

/// Pure forward pass. Train mode normalizes with batch statistics but does
/// not touch running statistics (see forward_train).
ForwardResult forward(const Network& net, const Tensor4& batch, Mode mode);

/// Train-mode forward that also folds the batch statistics into every
/// batchnorm layer's running statistics with momentum 0.1.
ForwardResult forward_train(Network& net, const Tensor4& batch);

/// Eval-mode logits.
Matrix infer(const Network& net, const Tensor4& batch);

/// Blends a train-mode cache's batch statistics into running statistics.
void update_running_stats(Network& net, const ForwardCache& cache,
                          double momentum = kBatchNormMomentum);

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;
};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Row-wise softmax.
Matrix softmax(const Matrix& logits);

struct LayerGradient {
  Tensor4 weights;
  Vector bias;
  Vector gamma;
  Vector beta;
};
using GradientSet = std::vector<LayerGradient>;

/// Zero-valued gradient blocks shaped like net's parameters.
GradientSet zero_gradients(const Network& net);

GradientSet backward(const Network& net, const ForwardCache& cache,
                     const Matrix& dlogits);

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Momentum buffers share the gradient layout.
using MomentumState = GradientSet;

/// v <- momentum * v + g + wd * w (weights only); w <- w - lr * v.
/// Biases and batchnorm parameters are exempt from weight decay.
void sgd_step(Network& net, const GradientSet& grads, MomentumState& state,
              const SgdParams& params);

/// K x (C*kh*kw) matrix whose row k is unit k's kernel flattened C-major.
Matrix reshape_kernel_to_matrix(const Layer& layer);
/// Inverse of reshape_kernel_to_matrix; shapes must agree.
void assign_kernel_from_matrix(Layer& layer, const Matrix& theta);

Index argmax_row(const Matrix& logits, Index row);
std::vector<int> predict(const Network& net, const Tensor4& batch);

}  // namespace catn
