// Command-line driver: train, compress, evaluate, reload-finetune, report.

#include "catn/commands.hpp"

#include <iostream>

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Compression-aware training toolkit"};
  app.require_subcommand(1);

  std::string config, out, model, report, data, metrics;
  std::optional<std::uint64_t> seed;
  std::optional<catn::Index> reload_epoch;
  double energy = 1.0;
  std::vector<std::string> report_paths;

  auto* train = app.add_subcommand("train", "Train a network from a config file");
  train->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output model file")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--metrics", metrics, "Metrics log (default: OUT.metrics.jsonl)");

  auto* compress = app.add_subcommand("compress", "Prune and factorize a trained model");
  compress->add_option("--model", model, "Input model file")->required()->check(CLI::ExistingFile);
  compress->add_option("--energy", energy, "Singular-value energy to keep, in (0, 1]")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  compress->add_option("--out", out, "Output model file")->required();
  compress->add_option("--report", report, "Output JSON report")->required();
  compress->add_option("--data", data, "Evaluation data spec (default: the model's test split)");

  auto* evaluate = app.add_subcommand("evaluate", "Top-1 accuracy of a model");
  evaluate->add_option("--model", model, "Model file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data,
                       "config:PATH | idx:IMAGES,LABELS | csv:PATH[,CxHxW[,SCALE]] "
                       "(default: the model's test split)");

  auto* reload = app.add_subcommand("reload-finetune", "Train, prune zeroed units, continue training");
  reload->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  reload->add_option("--reload-epoch", reload_epoch, "Epoch at which to prune (default: config)");
  reload->add_option("--out", out, "Output model file")->required();
  reload->add_option("--model", model, "Start from this model instead of training from scratch")
      ->check(CLI::ExistingFile);
  reload->add_option("--metrics", metrics, "Metrics log (default: OUT.metrics.jsonl)");

  auto* rep = app.add_subcommand("report", "Consolidate compression reports into CSV");
  rep->add_option("reports", report_paths, "Report files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
  };

  try {
    if (*train) {
      catn::cmd_train(config, out, seed, std::cerr, opt_path(metrics));
    } else if (*compress) {
      catn::cmd_compress(model, energy, out, report, data, std::cerr);
    } else if (*evaluate) {
      catn::cmd_evaluate(model, data, std::cout);
    } else if (*reload) {
      catn::cmd_reload_finetune(config, reload_epoch, out, opt_path(model), std::cerr, opt_path(metrics));
    } else if (*rep) {
      std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
      catn::cmd_report(paths, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
