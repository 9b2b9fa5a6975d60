#pragma once

#include "catn/compressor.hpp"
#include "catn/model_io.hpp"
#include "catn/report.hpp"
#include "catn/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace catn {

struct TrainOutcome {
  ModelFile model;
  std::vector<EpochMetrics> metrics;
};

/// Metrics log written next to a model unless a path is given.
std::filesystem::path default_metrics_path(const std::filesystem::path& model_path);

/// Trains from a config file, saves the model and a JSON-lines metrics log.
TrainOutcome cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_path,
                       std::optional<std::uint64_t> seed, std::ostream& log,
                       std::optional<std::filesystem::path> metrics_path = std::nullopt);

/// Same as cmd_train but from an in-memory config (no files except out).
TrainOutcome run_training(const TrainConfig& cfg, const DataSplits& data, bool record_timing,
                          std::ostream& log);

/// Evaluation data: "" (test split of the config stored in the model),
/// "config:PATH", "idx:IMAGES,LABELS" or "csv:PATH[,CxHxW[,SCALE]]".
/// File-based data is standardized with the model's stored statistics.
Dataset load_eval_data(const std::string& spec, const ModelFile& model);

ReportDocument cmd_compress(const std::filesystem::path& model_path, double energy,
                            const std::filesystem::path& out_path,
                            const std::filesystem::path& report_path, const std::string& data_spec,
                            std::ostream& log);

struct EvaluateResult {
  double accuracy = 0.0;
  Index correct = 0;
  Index samples = 0;
};

EvaluateResult cmd_evaluate(const std::filesystem::path& model_path, const std::string& data_spec,
                            std::ostream& out);

struct ReloadFinetuneOutcome {
  TrainOutcome train;
  ReloadOutcome reload;
};

/// Trains up to the reload epoch (or starts from model_path, which must have
/// completed at most that many epochs), prunes zeroed units, rebuilds the
/// smaller network and continues to the configured epoch budget. Per-epoch
/// median step times are logged.
ReloadFinetuneOutcome cmd_reload_finetune(const std::filesystem::path& config_path,
                                          std::optional<Index> reload_epoch,
                                          const std::filesystem::path& out_path,
                                          std::optional<std::filesystem::path> model_path,
                                          std::ostream& log,
                                          std::optional<std::filesystem::path> metrics_path = std::nullopt);

ReloadFinetuneOutcome run_reload_finetune(const TrainConfig& cfg, const DataSplits& data,
                                          std::optional<ModelFile> start, std::ostream& log);

void cmd_report(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& out_csv);

}  // namespace catn
