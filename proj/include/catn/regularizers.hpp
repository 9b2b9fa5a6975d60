#pragma once

#include "catn/linalg.hpp"
#include "catn/network.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace catn {

/// Weights of the low-rank and sparse-group penalties.
struct RegConfig {
  double tau = 0.0;    // nuclear-norm weight
  double alpha = 0.2;  // 0: pure group term, 1: pure elementwise L1
  /// One entry per regularized layer, in layer order. Empty means all zero.
  std::vector<double> lambda_per_layer;
  /// Step size entering the proximal subproblem; tracks the scheduled lr.
  double prox_lr = 0.1;

  /// Throws std::invalid_argument if inconsistent with net.
  void validate(const Network& net) const;
  double lambda_for(std::size_t regularized_position) const;
};

/// Lambda vector with `first` for the layers of the first `first_group_size`
/// architecture blocks and `rest` for the others. block_of_layer maps each
/// layer index to the block it came from.
std::vector<double> two_group_lambdas(const Network& net,
                                      const std::vector<std::size_t>& block_of_layer,
                                      double first, double rest,
                                      std::size_t first_group_size);

/// (1-alpha)*lambda*sqrt(P)*||x||_2 + alpha*lambda*||x||_1 for one unit.
template <class Derived>
typename Derived::Scalar sparse_group_lasso_penalty(const Eigen::MatrixBase<Derived>& unit,
                                                    typename Derived::Scalar lambda,
                                                    typename Derived::Scalar alpha,
                                                    Index group_size) {
  using Scalar = typename Derived::Scalar;
  const Scalar root = std::sqrt(static_cast<Scalar>(group_size));
  return (Scalar(1) - alpha) * lambda * root * unit.norm() +
         alpha * lambda * unit.template lpNorm<1>();
}

/// Closed-form prox of rho times the sparse group Lasso penalty: elementwise
/// soft-threshold at rho*alpha*lambda, then group shrinkage at
/// rho*(1-alpha)*lambda*sqrt(P).
template <class Derived>
VectorX<typename Derived::Scalar> prox_sparse_group_lasso(
    const Eigen::MatrixBase<Derived>& unit, typename Derived::Scalar rho,
    typename Derived::Scalar lambda, typename Derived::Scalar alpha, Index group_size) {
  using Scalar = typename Derived::Scalar;
  if (!(rho > Scalar(0))) throw std::invalid_argument("prox_sparse_group_lasso: rho must be positive");
  if (!(alpha >= Scalar(0) && alpha <= Scalar(1))) {
    throw std::invalid_argument("prox_sparse_group_lasso: alpha must lie in [0, 1]");
  }
  if (group_size != unit.size()) {
    throw std::invalid_argument("prox_sparse_group_lasso: group size differs from vector length");
  }
  VectorX<Scalar> out = unit;
  if (lambda == Scalar(0)) return out;
  const Scalar l1_cut = rho * alpha * lambda;
  for (Index i = 0; i < out.size(); ++i) {
    const Scalar mag = std::abs(out(i)) - l1_cut;
    out(i) = mag > Scalar(0) ? std::copysign(mag, out(i)) : Scalar(0);
  }
  const Scalar group_cut =
      rho * (Scalar(1) - alpha) * lambda * std::sqrt(static_cast<Scalar>(group_size));
  const Scalar len = out.norm();
  if (len <= group_cut) return VectorX<Scalar>::Zero(out.size());
  if (group_cut > Scalar(0)) out *= Scalar(1) - group_cut / len;
  return out;
}

/// Prox of rho*tau*||.||_*, i.e. singular value soft-thresholding at rho*tau.
template <class Derived>
MatrixX<typename Derived::Scalar> prox_nuclear_layer(const Eigen::MatrixBase<Derived>& theta,
                                                     typename Derived::Scalar rho,
                                                     typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(rho > Scalar(0))) throw std::invalid_argument("prox_nuclear_layer: rho must be positive");
  if (!(tau >= Scalar(0))) throw std::invalid_argument("prox_nuclear_layer: tau must be nonnegative");
  if (tau == Scalar(0)) return theta;
  return svt(theta, rho * tau);
}

/// Value of the combined regularizer over the regularized layers.
double regularizer_value(const Network& net, const RegConfig& cfg);

/// One incremental proximal step per regularized layer: unit-wise sparse
/// group Lasso (when lambda > 0), then singular value thresholding (when
/// tau > 0). Other layers are left bit-identical.
void apply_prox_schedule(Network& net, const RegConfig& cfg);

}  // namespace catn
