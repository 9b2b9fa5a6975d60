#include "catn/trainer.hpp"

#include "catn/compressor.hpp"
#include "catn/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace catn {

DataSplits load_splits(const DataSpec& spec) {
  DataSplits out;
  if (spec.source == "synthetic") {
    Teacher teacher = synthesize_teacher(spec.seed, spec.train_samples, spec.input_shape,
                                         spec.teacher, spec.classes);
    out.train = std::move(teacher.data);
    out.test = label_with_teacher(teacher.net, derive_seed(spec.seed, 1), spec.test_samples);
  } else if (spec.source == "idx") {
    out.train = load_idx(spec.train_images, spec.train_labels);
    out.test = load_idx(spec.test_images, spec.test_labels);
  } else if (spec.source == "csv") {
    out.train = load_csv(spec.train_csv, spec.csv);
    out.test = load_csv(spec.test_csv, spec.csv);
  } else {
    throw std::invalid_argument("unknown data source '" + spec.source + "'");
  }
  if (out.train.sample_shape() != out.test.sample_shape()) {
    throw std::invalid_argument("train and test samples differ in shape: " +
                                out.train.sample_shape().str() + " vs " +
                                out.test.sample_shape().str());
  }
  const int classes = std::max(out.train.class_count, out.test.class_count);
  out.train.class_count = out.test.class_count = classes;
  if (spec.normalize) {
    const Normalization norm = fit_normalization(out.train);
    apply_normalization(out.train, norm);
    apply_normalization(out.test, norm);
  }
  return out;
}

std::string to_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["lr"] = m.lr;
  j["train_loss"] = m.train_loss;
  j["eval_accuracy"] = m.eval_accuracy;
  j["regularizer"] = m.regularizer;
  j["objective"] = m.objective;
  j["effective_ranks"] = m.effective_ranks;
  j["zeroed_units"] = m.zeroed_units;
  j["params"] = m.params;
  if (m.median_step_ms) j["median_step_ms"] = *m.median_step_ms;
  j["reloaded"] = m.reloaded;
  return j.dump();
}

double scheduled_lr(const TrainConfig& cfg, Index epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_period));
}

RegConfig reg_config_for(const TrainConfig& cfg, const Network& net,
                         const std::vector<std::size_t>& block_of_layer, double prox_lr) {
  RegConfig reg;
  reg.tau = cfg.tau;
  reg.alpha = cfg.alpha;
  reg.prox_lr = prox_lr;
  reg.lambda_per_layer = two_group_lambdas(net, block_of_layer, cfg.lambda_first, cfg.lambda_rest,
                                           static_cast<std::size_t>(cfg.first_group_size));
  return reg;
}

TrainState initial_state(const TrainConfig& cfg, const DataSplits& data) {
  BuiltNetwork built = build_network(cfg, data.train.sample_shape(), data.train.class_count);
  TrainState state;
  state.net = std::move(built.net);
  state.block_of_layer = std::move(built.block_of_layer);
  state.momentum = zero_gradients(state.net);
  return state;
}

EpochMetrics measure(const Network& net, const TrainConfig& cfg, const DataSplits& data,
                     const std::vector<std::size_t>& block_of_layer, Index epoch) {
  EpochMetrics m;
  m.epoch = epoch + 1;
  m.lr = scheduled_lr(cfg, epoch);
  m.eval_accuracy = accuracy(net, data.test);
  m.regularizer = regularizer_value(net, reg_config_for(cfg, net, block_of_layer, m.lr));
  const Index probe_n = std::min(kProbeSamples, data.train.size());
  std::vector<std::size_t> probe_idx(static_cast<std::size_t>(probe_n));
  std::iota(probe_idx.begin(), probe_idx.end(), std::size_t{0});
  const Dataset probe = take(data.train, probe_idx);
  m.objective = cross_entropy(infer(net, probe.images), probe.labels).loss + m.regularizer;
  const std::vector<Index> zeroed = zeroed_units(net, cfg.zero_unit_tol);
  for (std::size_t i : net.parametric_layers()) {
    m.effective_ranks.push_back(effective_rank(reshape_kernel_to_matrix(net.layers[i]), kEffectiveRankTol));
    m.zeroed_units.push_back(zeroed[i]);
  }
  m.params = count_params(net);
  return m;
}

void train_epochs(TrainState& state, const TrainConfig& cfg, const DataSplits& data, Index until,
                  const TrainOptions& options) {
  using Clock = std::chrono::steady_clock;
  if (state.momentum.size() != state.net.layers.size()) state.momentum = zero_gradients(state.net);
  for (Index epoch = state.epochs_done; epoch < until; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    const SgdParams sgd{lr, cfg.momentum, cfg.weight_decay};
    double loss_sum = 0.0;
    Index seen = 0;
    std::vector<double> step_ms;
    for (const Batch& batch : batches(data.train, cfg.batch_size, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                                      cfg.data.flip)) {
      // Batch statistics are undefined for a single sample.
      if (batch.labels.size() < 2) continue;
      const auto start = Clock::now();
      ForwardResult fwd = forward_train(state.net, batch.images);
      const LossResult loss = cross_entropy(fwd.logits, batch.labels);
      // Epochs are reported 1-based, matching the metrics log.
      if (!std::isfinite(loss.loss)) throw TrainingDiverged(epoch + 1, "non-finite training loss");
      const GradientSet grads = backward(state.net, fwd.cache, loss.dlogits);
      try {
        sgd_step(state.net, grads, state.momentum, sgd);
      } catch (const std::domain_error& e) {
        throw TrainingDiverged(epoch + 1, e.what());
      }
      if (options.record_timing) {
        step_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
      }
      const auto n = static_cast<Index>(batch.labels.size());
      loss_sum += loss.loss * static_cast<double>(n);
      seen += n;
    }
    if ((epoch + 1) % cfg.prox_every == 0) {
      apply_prox_schedule(state.net, reg_config_for(cfg, state.net, state.block_of_layer, lr));
    }
    if (!state.net.layers.empty()) {
      for (const Layer& l : state.net.layers) {
        if (!l.weights.all_finite()) throw TrainingDiverged(epoch + 1, "non-finite weights");
      }
    }
    state.epochs_done = epoch + 1;
    if (options.on_epoch) {
      EpochMetrics m = measure(state.net, cfg, data, state.block_of_layer, epoch);
      m.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
      if (!step_ms.empty()) {
        auto mid = step_ms.begin() + static_cast<std::ptrdiff_t>(step_ms.size() / 2);
        std::nth_element(step_ms.begin(), mid, step_ms.end());
        double median = *mid;
        if (step_ms.size() % 2 == 0) median = (median + *std::max_element(step_ms.begin(), mid)) / 2.0;
        m.median_step_ms = median;
      }
      options.on_epoch(m);
    }
  }
}

ReloadOutcome reload_prune(TrainState& state, const TrainConfig& cfg) {
  ReloadOutcome out;
  out.params_before = count_params(state.net);
  PruneResult pruned = prune_zero_units(state.net, cfg.zero_unit_tol);
  out.removed_per_layer = pruned.removed_per_layer;
  out.warnings = pruned.warnings;
  out.changed = !(pruned.net == state.net);
  if (out.changed) {
    state.net = std::move(pruned.net);
    state.momentum = zero_gradients(state.net);
  }
  out.params_after = count_params(state.net);
  return out;
}

}  // namespace catn
