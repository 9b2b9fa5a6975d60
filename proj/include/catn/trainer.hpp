#pragma once

#include "catn/config.hpp"
#include "catn/nn.hpp"
#include "catn/regularizers.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace catn {

/// Relative tolerance used when logging effective ranks.
inline constexpr double kEffectiveRankTol = 1e-7;
/// Number of leading training samples forming the fixed objective probe.
inline constexpr Index kProbeSamples = 256;

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(Index epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  Index epoch() const { return epoch_; }

 private:
  Index epoch_;
};

/// Normalized train and test splits; train.normalization holds the
/// statistics fitted on the training split (also applied to test).
struct DataSplits {
  Dataset train;
  Dataset test;
};

DataSplits load_splits(const DataSpec& spec);

/// One JSON-lines record of the training log.
struct EpochMetrics {
  Index epoch = 0;  // 1-based count of completed epochs
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double regularizer = 0.0;
  double objective = 0.0;  // probe-batch loss + regularizer
  std::vector<Index> effective_ranks;  // per parametric layer
  std::vector<Index> zeroed_units;     // per parametric layer
  Index params = 0;
  std::optional<double> median_step_ms;
  bool reloaded = false;  // pruning happened right before this epoch
};

std::string to_json_line(const EpochMetrics& m);

struct TrainState {
  Network net;
  MomentumState momentum;
  Index epochs_done = 0;
  std::vector<std::size_t> block_of_layer;
};

struct TrainOptions {
  bool record_timing = false;
  std::function<void(const EpochMetrics&)> on_epoch;
};

double scheduled_lr(const TrainConfig& cfg, Index epoch);
RegConfig reg_config_for(const TrainConfig& cfg, const Network& net,
                         const std::vector<std::size_t>& block_of_layer, double prox_lr);

/// Fresh He-initialized network for cfg and the data's shapes.
TrainState initial_state(const TrainConfig& cfg, const DataSplits& data);

/// Runs epochs state.epochs_done .. until-1: shuffled SGD steps at the
/// scheduled lr, then the proximal step every cfg.prox_every epochs, then
/// metrics. Throws TrainingDiverged on a non-finite loss.
void train_epochs(TrainState& state, const TrainConfig& cfg, const DataSplits& data, Index until,
                  const TrainOptions& options = {});

struct ReloadOutcome {
  Index params_before = 0;
  Index params_after = 0;
  std::vector<Index> removed_per_layer;
  std::vector<std::string> warnings;
  bool changed = false;
};

/// Removes zeroed units; momentum is reset only if the network changed.
ReloadOutcome reload_prune(TrainState& state, const TrainConfig& cfg);

EpochMetrics measure(const Network& net, const TrainConfig& cfg, const DataSplits& data,
                     const std::vector<std::size_t>& block_of_layer, Index epoch);

}  // namespace catn
