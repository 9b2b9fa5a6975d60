#include "catn/regularizers.hpp"

#include "catn/nn.hpp"

namespace catn {

void RegConfig::validate(const Network& net) const {
  if (!(tau >= 0.0)) throw std::invalid_argument("RegConfig: tau must be nonnegative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("RegConfig: alpha must lie in [0, 1]");
  if (!(prox_lr > 0.0)) throw std::invalid_argument("RegConfig: prox_lr must be positive");
  const std::size_t regularized = net.regularized_layers().size();
  if (!lambda_per_layer.empty() && lambda_per_layer.size() != regularized) {
    throw std::invalid_argument("RegConfig: " + std::to_string(lambda_per_layer.size()) +
                                " lambda values for " + std::to_string(regularized) +
                                " regularized layers");
  }
  for (double lambda : lambda_per_layer) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("RegConfig: lambda must be nonnegative");
  }
}

double RegConfig::lambda_for(std::size_t regularized_position) const {
  if (lambda_per_layer.empty()) return 0.0;
  return lambda_per_layer.at(regularized_position);
}

std::vector<double> two_group_lambdas(const Network& net,
                                      const std::vector<std::size_t>& block_of_layer,
                                      double first, double rest,
                                      std::size_t first_group_size) {
  std::vector<double> out;
  for (std::size_t i : net.regularized_layers()) {
    const std::size_t block = i < block_of_layer.size() ? block_of_layer[i] : i;
    out.push_back(block < first_group_size ? first : rest);
  }
  return out;
}

double regularizer_value(const Network& net, const RegConfig& cfg) {
  cfg.validate(net);
  double total = 0.0;
  const auto regularized = net.regularized_layers();
  for (std::size_t pos = 0; pos < regularized.size(); ++pos) {
    const Layer& layer = net.layers[regularized[pos]];
    const Matrix theta = reshape_kernel_to_matrix(layer);
    const double lambda = cfg.lambda_for(pos);
    if (lambda > 0.0) {
      for (Index k = 0; k < theta.rows(); ++k) {
        total += sparse_group_lasso_penalty(theta.row(k).transpose(), lambda, cfg.alpha,
                                            theta.cols());
      }
    }
    if (cfg.tau > 0.0) total += cfg.tau * nuclear_norm(theta);
  }
  return total;
}

void apply_prox_schedule(Network& net, const RegConfig& cfg) {
  cfg.validate(net);
  const auto regularized = net.regularized_layers();
  for (std::size_t pos = 0; pos < regularized.size(); ++pos) {
    Layer& layer = net.layers[regularized[pos]];
    const double lambda = cfg.lambda_for(pos);
    if (lambda == 0.0 && cfg.tau == 0.0) continue;
    Matrix theta = reshape_kernel_to_matrix(layer);
    if (lambda > 0.0) {
      for (Index k = 0; k < theta.rows(); ++k) {
        theta.row(k) = prox_sparse_group_lasso(theta.row(k).transpose(), cfg.prox_lr,
                                               lambda, cfg.alpha, theta.cols())
                           .transpose();
      }
    }
    if (cfg.tau > 0.0) theta = prox_nuclear_layer(theta, cfg.prox_lr, cfg.tau);
    assign_kernel_from_matrix(layer, theta);
  }
}

}  // namespace catn
