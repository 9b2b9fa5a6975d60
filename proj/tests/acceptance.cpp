// End-to-end acceptance suite: one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails.

#include "catn/commands.hpp"
#include "catn/linalg.hpp"
#include "catn/regularizers.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "grids.hpp"
#include "oracles.hpp"
#include "prox_invariants.hpp"

namespace catn {
namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Planted rank-2 teacher task shared by criteria 3, 4, 5, 7 and 8.

std::string planted_config(double tau, double lambda, Index epochs) {
  return fmt(R"(epochs = %lld
tau = %.17g
lambda = %.17g
lr = 0.1
lr_decay = 0.1
lr_decay_period = 25
weight_decay = 0.003
batch_size = 32
seed = 1

[data]
source = synthetic
train_samples = 4000
test_samples = 1000
input_shape = 3x8x8
classes = 4

[teacher]
filters = 16, 16
planted_ranks = 2, 2
padding = valid

[layer]
type = conv2d
filters = 16
padding = valid

[layer]
type = conv2d
filters = 16
padding = valid

[layer]
type = dense
)",
             static_cast<long long>(epochs), tau, lambda);
}

class PlantedTask {
 public:
  PlantedTask() : data_(load_splits(parse_config(planted_config(0, 0, 30)).data)) {}

  const DataSplits& data() const { return data_; }

  /// Trains (once per setting) the 30-epoch run for tau and lambda.
  const TrainOutcome& run(double tau, double lambda) {
    const auto key = std::make_pair(tau, lambda);
    auto it = runs_.find(key);
    if (it == runs_.end()) {
      std::ostringstream log;
      it = runs_.emplace(key, run_training(parse_config(planted_config(tau, lambda, 30)), data_, false, log))
               .first;
    }
    return it->second;
  }

 private:
  DataSplits data_;
  std::map<std::pair<double, double>, TrainOutcome> runs_;
};

Index summed_effective_rank(const Network& net) {
  Index total = 0;
  for (std::size_t i : net.regularized_layers()) {
    total += effective_rank(reshape_kernel_to_matrix(net.layers[i]), kEffectiveRankTol);
  }
  return total;
}

Index zeroed_regularized_units(const Network& net, double tol) {
  const std::vector<Index> zeroed = zeroed_units(net, tol);
  Index total = 0;
  for (std::size_t i : net.regularized_layers()) total += zeroed[i];
  return total;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  Rng rng(2024);
  double worst_svt = 0, worst_sgl = 0;
  for (int c = 0; c < 200; ++c) {
    const Index m = 1 + static_cast<Index>(rng.below(12));
    const Index n = 1 + static_cast<Index>(rng.below(9));
    const Matrix a = oracle::random_matrix(rng, m, n);
    const double t = rng.uniform(0.0, oracle::singular_values_by_eigensolver(a)(0));
    const Matrix numeric = oracle::svt_by_alternating_minimization(a, t, 1000 + c);
    worst_svt = std::max(worst_svt, (svt(a, t) - numeric).norm());

    const Index p = 1 + static_cast<Index>(rng.below(12));
    const Vector theta = oracle::random_vector(rng, p);
    const double rho = rng.uniform(0.05, 1.0), lambda = rng.uniform(0.0, 1.0), alpha = rng.uniform();
    const Vector ref = oracle::prox_sgl_by_dykstra(theta, rho, lambda, alpha, p);
    worst_sgl = std::max(worst_sgl, (prox_sparse_group_lasso(theta, rho, lambda, alpha, p) - ref).norm());
  }
  return {worst_svt <= 1e-4 && worst_sgl <= 1e-5,
          fmt("200 cases; max svt error %.2e (<= 1e-4), max sparse group prox error %.2e (<= 1e-5)",
              worst_svt, worst_sgl)};
}

Verdict criterion2() {
  Rng rng(31);
  std::uint64_t seed = 500;
  double worst = 0;
  std::string worst_case;
  Index checked = 0;
  int cases = 0;
  for (const grid::GridCase& c : grid::gradient_grid()) {
    Network net = grid::with_head(c.in, c.body);
    oracle::randomize_fan_in(net, ++seed);
    const Tensor4 x = oracle::random_tensor(rng, 3, c.in.channels, c.in.height, c.in.width);
    for (Mode mode : {Mode::train, Mode::eval}) {
      const auto r = oracle::check_gradients(net, x, grid::labels_for(3, 3), mode);
      checked += r.checked;
      ++cases;
      if (r.worst > worst) {
        worst = r.worst;
        worst_case = c.name;
      }
    }
  }
  return {worst <= 1e-4, fmt("%d layer/mode cases, %lld parameters; worst relative error %.2e (%s)", cases,
                             static_cast<long long>(checked), worst, worst_case.c_str())};
}

Verdict criterion3(PlantedTask& task) {
  const TrainOutcome& base = task.run(0, 0);
  const Index base_rank = summed_effective_rank(base.model.net);
  const double base_acc = base.metrics.back().eval_accuracy;
  bool lower = true, zero_within = false;
  std::string detail = fmt("tau=0: rank %lld acc %.3f", static_cast<long long>(base_rank), base_acc);
  for (double tau : {1.0, 5.0, 10.0}) {
    const TrainOutcome& run = task.run(tau, 0);
    const Network& net = run.model.net;
    const Index rank = summed_effective_rank(net);
    const Index zeroed = zeroed_regularized_units(net, 1e-6);
    const double acc = run.metrics.back().eval_accuracy;
    lower = lower && rank < base_rank;
    zero_within = zero_within || (zeroed >= 1 && acc >= base_acc - 0.02);
    detail += fmt("; tau=%g: rank %lld zeroed %lld acc %.3f", tau, static_cast<long long>(rank),
                  static_cast<long long>(zeroed), acc);
  }
  return {lower && zero_within, detail};
}

Verdict criterion4(PlantedTask& task) {
  CompressionConfig cc;
  cc.energy = 0.9;
  const double base_acc = task.run(0, 0).metrics.back().eval_accuracy;
  struct Row {
    const char* name;
    double tau, lambda;
    Index params = 0;
    double acc = 0, drop = 0;
  };
  std::vector<Row> rows = {{"tau=0", 0, 0}, {"tau=10", 10, 0}, {"tau=10+lambda=0.1", 10, 0.1}};
  bool within = true;
  std::string detail = "energy 0.9";
  for (Row& r : rows) {
    const TrainOutcome& run = task.run(r.tau, r.lambda);
    const auto [compressed, report] = compress_network(run.model.net, cc);
    r.params = report.params_after;
    r.acc = accuracy(compressed, task.data().test);
    r.drop = run.metrics.back().eval_accuracy - r.acc;
    within = within && r.drop <= 0.01 && r.acc >= base_acc - 0.01;
    detail += fmt("; %s: %lld params acc %.3f (drop %.3f)", r.name, static_cast<long long>(r.params), r.acc,
                  r.drop);
  }
  const bool ordered = rows[2].params < rows[1].params && rows[1].params < rows[0].params;
  return {ordered && within, detail};
}

Verdict criterion5(PlantedTask& task) {
  CompressionConfig cc;
  cc.energy = 1.0;
  double worst = 0;
  bool same = true;
  std::string detail;
  for (double tau : {0.0, 10.0}) {
    const Network& net = task.run(tau, 0).model.net;
    const auto [compressed, report] = compress_network(net, cc);
    const Tensor4& x = task.data().test.images;
    const double diff = (infer(net, x) - infer(compressed, x)).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    same = same && predict(net, x) == predict(compressed, x);
    detail += fmt("%stau=%g: %lld -> %lld params, max logit diff %.2e", detail.empty() ? "" : "; ", tau,
                  static_cast<long long>(report.params_before), static_cast<long long>(report.params_after),
                  diff);
  }
  return {same && worst <= 1e-8, fmt("%lld samples; ", static_cast<long long>(task.data().test.size())) +
                                     detail + (same ? "; predictions identical" : "; predictions differ")};
}

Verdict criterion6() {
  int configs = 0, mac_ok = 0;
  for (LayerKind kind : {LayerKind::conv2d, LayerKind::conv1d_vertical, LayerKind::conv1d_horizontal}) {
    for (Index stride : {1, 2}) {
      for (Index pad : {0, 1}) {
        const Index kh = kind == LayerKind::conv1d_horizontal ? 1 : 3;
        const Index kw = kind == LayerKind::conv1d_vertical ? 1 : 3;
        const Index ph = kind == LayerKind::conv1d_horizontal ? 0 : pad;
        const Index pw = kind == LayerKind::conv1d_vertical ? 0 : pad;
        const Layer l = make_conv(kind, 3, 5, kh, kw, stride, ph, pw, true);
        const Shape3 in{3, 9, 8};
        ++configs;
        mac_ok += count_layer_macs(l, in, 0) == oracle::macs_by_loops(l, in);
      }
    }
  }
  const std::vector<std::pair<Layer, Shape3>> extra = {
      {make_conv(LayerKind::conv2d, 2, 4, 5, 3, 1, 2, 1, false), {2, 7, 6}},
      {make_conv(LayerKind::conv2d, 1, 6, 1, 1, 1, 0, 0, true), {1, 4, 4}},
      {make_conv(LayerKind::conv2d, 4, 2, 3, 3, 3, 1, 1, true), {4, 10, 11}},
      {make_conv(LayerKind::conv1d_vertical, 2, 3, 5, 1, 2, 2, 0, true), {2, 9, 3}},
      {make_conv(LayerKind::conv1d_horizontal, 3, 2, 1, 5, 1, 0, 2, false), {3, 2, 9}},
      {make_dense(12, 5), {12, 1, 1}},
      {make_dense(7, 3, false), {7, 1, 1}},
      {make_batchnorm(3), {3, 4, 4}},
  };
  for (const auto& [l, in] : extra) {
    ++configs;
    mac_ok += count_layer_macs(l, in, 0) == oracle::macs_by_loops(l, in);
  }
  // Whole networks: summed per-layer loops.
  Network net;
  net.input_shape = {3, 8, 8};
  net.layers = {make_conv1d_vertical(3, 4, 3, 1), make_batchnorm(4), make_relu(),
                make_conv1d_horizontal(4, 6, 3, 1), make_relu(), make_conv2d(6, 5, 3, 2, 1),
                make_flatten(), make_dense(80, 4)};
  const bool net_ok = count_macs(net, net.input_shape) == oracle::network_macs_by_loops(net);

  Rng rng(6);
  int fact_cases = 0, fact_ok = 0;
  for (int c = 0; c < 20; ++c) {
    const Index ci = 1 + static_cast<Index>(rng.below(5));
    const Index k = 2 + static_cast<Index>(rng.below(8));
    const Index kh = 1 + static_cast<Index>(rng.below(3)), kw = 1 + static_cast<Index>(rng.below(3));
    Layer layer = make_conv(LayerKind::conv2d, ci, k, kh, kw, 1, 0, 0, true);
    for (double& w : layer.weights.data()) w = rng.normal();
    const Index r = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min(k, ci * kh * kw))));
    const auto [basis, mixing] = factorize_layer(layer, r);
    ++fact_cases;
    fact_ok += count_layer_params(basis) + count_layer_params(mixing) == r * (ci * kh * kw + k) + k;
  }
  const bool pass = mac_ok == configs && net_ok && configs >= 20 && fact_ok == fact_cases;
  return {pass, fmt("MACs: %d/%d layer configurations and mixed network %s; factorized counts %d/%d exact",
                    mac_ok, configs, net_ok ? "exact" : "WRONG", fact_ok, fact_cases)};
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict criterion7(PlantedTask& task) {
  TrainConfig cfg = parse_config(planted_config(10, 0.5, 50));
  std::ostringstream log;
  const TrainOutcome plain = run_training(cfg, task.data(), true, log);
  cfg.reload_epoch = 15;
  const ReloadFinetuneOutcome reload = run_reload_finetune(cfg, task.data(), std::nullopt, log);
  std::vector<double> plain_ms, reload_ms;
  for (std::size_t e = 15; e < 50; ++e) {
    plain_ms.push_back(plain.metrics[e].median_step_ms.value_or(0));
    reload_ms.push_back(reload.train.metrics[e].median_step_ms.value_or(0));
  }
  const double tp = median_of(plain_ms), tr = median_of(reload_ms);
  const Index pp = count_params(plain.model.net), pr = count_params(reload.train.model.net);
  const double ap = plain.metrics.back().eval_accuracy, ar = reload.train.metrics.back().eval_accuracy;
  const double speedup = 1 - tr / tp;
  const double shrink = 1 - static_cast<double>(pr) / static_cast<double>(pp);
  return {speedup >= 0.2 && shrink >= 0.5 && std::abs(ar - ap) <= 0.02,
          fmt("median step %.3f ms -> %.3f ms (%.0f%% faster); params %lld -> %lld (%.0f%% fewer); "
              "accuracy %.3f vs %.3f",
              tp, tr, 100 * speedup, static_cast<long long>(pp), static_cast<long long>(pr), 100 * shrink, ar,
              ap)};
}

Verdict criterion8(PlantedTask& task) {
  const auto first = serialize_model(task.run(0, 0).model);
  std::ostringstream log;
  const auto second = serialize_model(run_training(parse_config(planted_config(0, 0, 30)), task.data(), false, log).model);
  return {first == second, fmt("model files of %zu bytes %s", first.size(),
                               first == second ? "bit-identical" : "DIFFER")};
}

Verdict criterion9() {
  bool pass = true;
  std::string detail = "500 cases each:";
  for (const auto& inv : invariants::all()) {
    const int bad = inv.check(inv.seed, 500);
    pass = pass && bad == 0;
    detail += fmt(" %s %d violations;", inv.name.c_str(), bad);
  }
  detail.pop_back();
  return {pass, detail};
}

}  // namespace
}  // namespace catn

int main() {
  using namespace catn;
  PlantedTask task;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, criterion1},
      {2, criterion2},
      {3, [&] { return criterion3(task); }},
      {4, [&] { return criterion4(task); }},
      {5, [&] { return criterion5(task); }},
      {6, criterion6},
      {7, [&] { return criterion7(task); }},
      {8, [&] { return criterion8(task); }},
      {9, criterion9},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("CRITERION %d: %s  %s [%.1fs]\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
