#include "catn/nn.hpp"

#include <gtest/gtest.h>

#include "grids.hpp"
#include "oracles.hpp"

namespace catn {
namespace {

using grid::chain;
using grid::labels_for;
using grid::with_head;

TEST(Forward, ReluExample) {
  Network net = chain({2, 1, 1}, {make_relu(), make_flatten()});
  Tensor4 x(1, 2, 1, 1);
  x(0, 0, 0, 0) = -1;
  x(0, 1, 0, 0) = 2;
  const Matrix y = infer(net, x);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(0, 1), 2.0);
}

TEST(Forward, ConvAffineExample) {
  Layer conv = make_conv2d(1, 1, 1);
  conv.weights(0, 0, 0, 0) = 2;
  conv.bias(0) = 1;
  Network net = chain({1, 1, 1}, {conv, make_flatten()});
  Tensor4 x(1, 1, 1, 1, 3.0);
  EXPECT_EQ(infer(net, x)(0, 0), 7.0);
}

TEST(Forward, ShapeMismatchNamesLayer) {
  Network net = chain({1, 4, 4}, {make_conv2d(1, 2, 3), make_flatten(), make_dense(8, 2)});
  net.layers[2] = make_dense(9, 2);
  try {
    net.validate();
    FAIL() << "expected mismatch";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
  Network ok = chain({1, 4, 4}, {make_conv2d(1, 2, 3), make_flatten(), make_dense(8, 2)});
  EXPECT_THROW(forward(ok, Tensor4(1, 1, 5, 5), Mode::eval), std::invalid_argument);
}

TEST(Forward, DecomposedBlockOnConstantImageEqualsBoxFilter) {
  const Index dv = 3, dh = 2;
  Layer v = make_conv(LayerKind::conv1d_vertical, 1, 1, dv, 1, 1, 0, 0, true);
  Layer h = make_conv(LayerKind::conv1d_horizontal, 1, 1, 1, dh, 1, 0, 0, true);
  for (double& w : v.weights.data()) w = 1.0;
  for (double& w : h.weights.data()) w = 1.0;
  Network net = chain({1, 5, 6}, {v, h, make_flatten()});
  Tensor4 x(1, 1, 5, 6, 0.7);
  const Matrix y = infer(net, x);
  // Direct 2-D convolution with the all-ones dv x dh kernel.
  ASSERT_EQ(y.cols(), 3 * 5);
  for (Index i = 0; i < y.cols(); ++i) EXPECT_NEAR(y(0, i), 0.7 * dv * dh, 1e-12);
}

TEST(Forward, RankOneDecomposedBlockMatchesFullConvolution) {
  Rng rng(3);
  const Index dv = 3, dh = 3;
  for (auto [pad_v, pad_h] : {std::pair{0, 0}, {1, 1}, {1, 0}}) {
    Layer v = make_conv(LayerKind::conv1d_vertical, 1, 1, dv, 1, 1, pad_v, 0, false);
    Layer h = make_conv(LayerKind::conv1d_horizontal, 1, 1, 1, dh, 1, 0, pad_h, false);
    Layer full = make_conv(LayerKind::conv2d, 1, 1, dv, dh, 1, pad_v, pad_h, false);
    for (Index i = 0; i < dv; ++i) v.weights(0, 0, i, 0) = rng.normal();
    for (Index j = 0; j < dh; ++j) h.weights(0, 0, 0, j) = rng.normal();
    for (Index i = 0; i < dv; ++i) {
      for (Index j = 0; j < dh; ++j) full.weights(0, 0, i, j) = v.weights(0, 0, i, 0) * h.weights(0, 0, 0, j);
    }
    const Network sep = chain({1, 6, 7}, {v, h, make_flatten()});
    const Network direct = chain({1, 6, 7}, {full, make_flatten()});
    const Tensor4 x = oracle::random_tensor(rng, 2, 1, 6, 7);
    EXPECT_LE((infer(sep, x) - infer(direct, x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Forward, EvalIsDeterministicAndReluNonnegative) {
  Network net = with_head({2, 5, 5}, {make_conv2d(2, 3, 3, 1, 1), make_batchnorm(3), make_relu()});
  oracle::randomize(net, 4);
  Rng rng(4);
  const Tensor4 x = oracle::random_tensor(rng, 3, 2, 5, 5);
  const ForwardResult a = forward(net, x, Mode::eval);
  const ForwardResult b = forward(net, x, Mode::eval);
  EXPECT_TRUE(a.logits == b.logits);
  for (double v : a.cache.layers[3].input.data()) EXPECT_GE(v, 0.0);
}

TEST(Forward, BatchNormEvalIsAffine) {
  Layer bn = make_batchnorm(2);
  bn.gamma << 1.5, -0.5;
  bn.beta << 0.1, 0.2;
  bn.running_mean << 0.3, -0.4;
  bn.running_var << 2.0, 0.5;
  Network net = chain({2, 1, 1}, {bn, make_flatten()});
  Tensor4 x(1, 2, 1, 1);
  x(0, 0, 0, 0) = 1.0;
  x(0, 1, 0, 0) = -2.0;
  const Matrix y = infer(net, x);
  EXPECT_NEAR(y(0, 0), 1.5 * (1.0 - 0.3) / std::sqrt(2.0 + 1e-5) + 0.1, 1e-14);
  EXPECT_NEAR(y(0, 1), -0.5 * (-2.0 + 0.4) / std::sqrt(0.5 + 1e-5) + 0.2, 1e-14);
}

TEST(Forward, TrainModeUpdatesRunningStatsWithMomentum) {
  Network net = chain({1, 1, 2}, {make_batchnorm(1), make_flatten()});
  Tensor4 x(2, 1, 1, 2);
  x(0, 0, 0, 0) = 1;
  x(0, 0, 0, 1) = 2;
  x(1, 0, 0, 0) = 3;
  x(1, 0, 0, 1) = 6;
  forward_train(net, x);
  const double mean = 3.0;
  const double unbiased = ((1 - 3.0) * (1 - 3.0) + 1 + 0 + 9) / 3.0;
  EXPECT_NEAR(net.layers[0].running_mean(0), 0.1 * mean, 1e-14);
  EXPECT_NEAR(net.layers[0].running_var(0), 0.9 + 0.1 * unbiased, 1e-14);
  EXPECT_THROW(forward(net, Tensor4(1, 1, 1, 2), Mode::train), std::invalid_argument);
}

TEST(CrossEntropy, Examples) {
  Matrix logits(1, 2);
  logits << 0, 0;
  const std::vector<int> zero = {0};
  EXPECT_NEAR(cross_entropy(logits, zero).loss, std::log(2.0), 1e-15);
  logits << 1000, 0;
  const LossResult sat = cross_entropy(logits, zero);
  EXPECT_TRUE(std::isfinite(sat.loss));
  EXPECT_NEAR(sat.loss, 0.0, 1e-12);
  const std::vector<int> bad = {2};
  EXPECT_THROW(cross_entropy(logits, bad), std::invalid_argument);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const Matrix logits = oracle::random_matrix(rng, 4, 5, 2.0);
  const std::vector<int> labels = {0, 3, 4, 1};
  const LossResult res = cross_entropy(logits, labels);
  for (Index i = 0; i < logits.rows(); ++i) {
    for (Index j = 0; j < logits.cols(); ++j) {
      Matrix up = logits, down = logits;
      up(i, j) += 1e-6;
      down(i, j) -= 1e-6;
      const double numeric = (cross_entropy(up, labels).loss - cross_entropy(down, labels).loss) / 2e-6;
      EXPECT_TRUE(oracle::close_rel(res.dlogits(i, j), numeric, 1e-6, 1e-9))
          << res.dlogits(i, j) << " vs " << numeric;
    }
  }
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(8);
  const Matrix p = softmax(oracle::random_matrix(rng, 6, 7, 30.0));
  for (Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Network net = with_head({2, 4, 4}, {make_conv2d(2, 3, 3, 1, 1), make_batchnorm(3), make_relu()});
  oracle::randomize(net, 5);
  Rng rng(5);
  const ForwardResult fwd = forward(net, oracle::random_tensor(rng, 2, 2, 4, 4), Mode::train);
  const GradientSet g = backward(net, fwd.cache, Matrix::Zero(2, 3));
  for (const LayerGradient& lg : g) {
    for (double v : lg.weights.data()) EXPECT_EQ(v, 0.0);
    EXPECT_TRUE(lg.bias.isZero(0.0));
    EXPECT_TRUE(lg.gamma.isZero(0.0));
  }
}

TEST(Backward, DenseClosedForm) {
  Rng rng(6);
  Network net = chain({4, 1, 1}, {make_dense(4, 3)});
  oracle::randomize(net, 6);
  const Tensor4 x = oracle::random_tensor(rng, 5, 4, 1, 1);
  const ForwardResult fwd = forward(net, x, Mode::train);
  const Matrix up = oracle::random_matrix(rng, 5, 3);
  const GradientSet g = backward(net, fwd.cache, up);
  const Matrix input = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(x.raw(), 5, 4);
  const Matrix expected = up.transpose() * input;
  const Matrix got = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(g[0].weights.raw(), 3, 4);
  EXPECT_LE((got - expected).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((g[0].bias - up.colwise().sum().transpose()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Backward, RejectsStaleCache) {
  Network net = with_head({1, 4, 4}, {make_conv2d(1, 2, 3)});
  Rng rng(7);
  const ForwardResult fwd = forward(net, oracle::random_tensor(rng, 2, 1, 4, 4), Mode::train);
  Network other = with_head({1, 4, 4}, {make_conv2d(1, 2, 3), make_relu()});
  EXPECT_THROW(backward(other, fwd.cache, Matrix::Zero(2, 3)), std::invalid_argument);
  EXPECT_THROW(backward(net, fwd.cache, Matrix::Zero(3, 3)), std::invalid_argument);
}

TEST(GradientCheck, TinyConvReluDenseBatchTwo) {
  Network net = with_head({2, 4, 4}, {make_conv2d(2, 3, 3), make_relu()});
  oracle::randomize(net, 21);
  Rng rng(21);
  const auto check = oracle::check_gradients(net, oracle::random_tensor(rng, 2, 2, 4, 4), labels_for(2, 3),
                                             Mode::train);
  EXPECT_LE(check.worst, 1e-4);
  EXPECT_GT(check.checked, 50);
}

TEST(GradientCheck, EveryLayerKindOverStridePaddingGrid) {
  Rng rng(31);
  std::uint64_t seed = 100;
  for (const grid::GridCase& c : grid::gradient_grid()) {
    Network net = with_head(c.in, c.body);
    oracle::randomize_fan_in(net, ++seed);
    const Tensor4 x = oracle::random_tensor(rng, 3, c.in.channels, c.in.height, c.in.width);
    const auto labels = labels_for(3, 3);
    const auto train = oracle::check_gradients(net, x, labels, Mode::train);
    EXPECT_LE(train.worst, 1e-4) << c.name << " (train)";
    const auto eval = oracle::check_gradients(net, x, labels, Mode::eval);
    EXPECT_LE(eval.worst, 1e-4) << c.name << " (eval)";
  }
}

TEST(Sgd, Examples) {
  Network net = chain({1, 1, 1}, {make_dense(1, 1, false)});
  net.layers[0].weights(0, 0, 0, 0) = 1.0;
  GradientSet g = zero_gradients(net);
  g[0].weights(0, 0, 0, 0) = 0.5;
  MomentumState state = zero_gradients(net);
  sgd_step(net, g, state, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 0, 0, 0), 0.95);

  net.layers[0].weights(0, 0, 0, 0) = 2.0;
  state[0].weights(0, 0, 0, 0) = 1.0;
  sgd_step(net, zero_gradients(net), state, {1.0, 0.9, 0.0});
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 0, 0, 0), 2.0 - 0.9);
}

TEST(Sgd, TwoStepsMatchScalarRecurrence) {
  Network net = chain({1, 1, 1}, {make_dense(1, 1)});
  net.layers[0].weights(0, 0, 0, 0) = 0.7;
  net.layers[0].bias(0) = -0.2;
  MomentumState state = zero_gradients(net);
  const double lr = 0.05, m = 0.9, wd = 0.01;
  double w = 0.7, vw = 0.0, b = -0.2, vb = 0.0;
  for (double gw : {0.3, -0.1}) {
    GradientSet g = zero_gradients(net);
    g[0].weights(0, 0, 0, 0) = gw;
    g[0].bias(0) = 2 * gw;
    sgd_step(net, g, state, {lr, m, wd});
    vw = m * vw + gw + wd * w;
    w = w - lr * vw;
    vb = m * vb + 2 * gw;  // biases are exempt from weight decay
    b = b - lr * vb;
  }
  EXPECT_EQ(net.layers[0].weights(0, 0, 0, 0), w);
  EXPECT_EQ(net.layers[0].bias(0), b);
}

TEST(Sgd, ValidatesAndRejectsNonFiniteGradient) {
  Network net = chain({1, 1, 1}, {make_batchnorm(1), make_dense(1, 1)});
  MomentumState state = zero_gradients(net);
  EXPECT_THROW(sgd_step(net, zero_gradients(net), state, {0.0, 0.9, 0.0}), std::invalid_argument);
  EXPECT_THROW(sgd_step(net, zero_gradients(net), state, {0.1, 1.0, 0.0}), std::invalid_argument);
  GradientSet g = zero_gradients(net);
  g[1].weights(0, 0, 0, 0) = std::numeric_limits<double>::infinity();
  try {
    sgd_step(net, g, state, {0.1, 0.9, 0.0});
    FAIL() << "expected rejection";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Sgd, LeavesRunningStatsAlone) {
  Network net = chain({1, 1, 1}, {make_batchnorm(1), make_dense(1, 1)});
  net.layers[0].running_mean(0) = 0.5;
  net.layers[0].running_var(0) = 2.0;
  GradientSet g = zero_gradients(net);
  g[0].gamma(0) = 1.0;
  MomentumState state = zero_gradients(net);
  sgd_step(net, g, state, {0.1, 0.9, 0.1});
  EXPECT_EQ(net.layers[0].running_mean(0), 0.5);
  EXPECT_EQ(net.layers[0].running_var(0), 2.0);
  EXPECT_DOUBLE_EQ(net.layers[0].gamma(0), 0.9);
}

TEST(Reshape, Examples) {
  Layer a = make_conv2d(1, 2, 1);
  a.weights(0, 0, 0, 0) = 4;
  a.weights(1, 0, 0, 0) = 5;
  const Matrix m = reshape_kernel_to_matrix(a);
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 1);
  EXPECT_EQ(m(0, 0), 4);
  EXPECT_EQ(m(1, 0), 5);

  Layer b = make_conv(LayerKind::conv2d, 2, 1, 1, 2, 1, 0, 0, true);
  b.weights(0, 0, 0, 0) = 1;
  b.weights(0, 0, 0, 1) = 2;
  b.weights(0, 1, 0, 0) = 3;
  b.weights(0, 1, 0, 1) = 4;
  const Matrix row = reshape_kernel_to_matrix(b);
  ASSERT_EQ(row.cols(), 4);
  for (Index c = 0; c < 2; ++c) {
    for (Index w = 0; w < 2; ++w) EXPECT_EQ(row(0, c * 2 + w), b.weights(0, c, 0, w));
  }
  EXPECT_THROW(reshape_kernel_to_matrix(make_relu()), std::invalid_argument);
}

TEST(Reshape, RoundTripIsBitExact) {
  Rng rng(9);
  Layer l = make_conv(LayerKind::conv2d, 3, 4, 2, 3, 1, 0, 0, true);
  for (double& v : l.weights.data()) v = rng.normal();
  Layer copy = l;
  copy.weights.set_zero();
  assign_kernel_from_matrix(copy, reshape_kernel_to_matrix(l));
  EXPECT_TRUE(copy.weights == l.weights);
}

}  // namespace
}  // namespace catn
