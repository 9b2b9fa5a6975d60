#include "catn/commands.hpp"

#include <cstdio>
#include <sstream>

namespace catn {

namespace {

void print_epoch(std::ostream& log, const EpochMetrics& m) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "epoch %3lld  lr %.4g  loss %.5f  acc %.4f  reg %.5g  params %lld",
                static_cast<long long>(m.epoch), m.lr, m.train_loss, m.eval_accuracy, m.regularizer,
                static_cast<long long>(m.params));
  log << buf;
  if (m.median_step_ms) {
    std::snprintf(buf, sizeof buf, "  step %.3f ms", *m.median_step_ms);
    log << buf;
  }
  log << "\n";
}

std::string metrics_text(const std::vector<EpochMetrics>& metrics) {
  std::string out;
  for (const EpochMetrics& m : metrics) out += to_json_line(m) + "\n";
  return out;
}

ModelFile to_model_file(const TrainState& state, const TrainConfig& cfg, const DataSplits& data) {
  ModelFile model;
  model.net = state.net;
  model.meta.config_text = to_text(cfg);
  model.meta.epoch = static_cast<std::uint64_t>(state.epochs_done);
  model.meta.seed = cfg.seed;
  model.meta.normalization = data.train.normalization;
  return model;
}

TrainConfig config_of(const ModelFile& model) {
  if (model.meta.config_text.empty()) {
    throw std::invalid_argument("model file carries no training config; pass --data");
  }
  return parse_config(model.meta.config_text);
}

Shape3 parse_shape_arg(const std::string& s) {
  Index d[3];
  char x1 = 0, x2 = 0;
  long long a = 0, b = 0, c = 0;
  std::istringstream in(s);
  if (!(in >> a >> x1 >> b >> x2 >> c) || x1 != 'x' || x2 != 'x' || a < 1 || b < 1 || c < 1 ||
      in.peek() != std::char_traits<char>::eof()) {
    throw std::invalid_argument("expected CxHxW, got '" + s + "'");
  }
  d[0] = a; d[1] = b; d[2] = c;
  return {d[0], d[1], d[2]};
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

std::filesystem::path default_metrics_path(const std::filesystem::path& model_path) {
  std::filesystem::path p = model_path;
  p += ".metrics.jsonl";
  return p;
}

TrainOutcome run_training(const TrainConfig& cfg, const DataSplits& data, bool record_timing,
                          std::ostream& log) {
  TrainOutcome outcome;
  TrainState state = initial_state(cfg, data);
  TrainOptions options;
  options.record_timing = record_timing;
  options.on_epoch = [&](const EpochMetrics& m) {
    outcome.metrics.push_back(m);
    print_epoch(log, m);
  };
  train_epochs(state, cfg, data, cfg.epochs, options);
  outcome.model = to_model_file(state, cfg, data);
  return outcome;
}

TrainOutcome cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_path,
                       std::optional<std::uint64_t> seed, std::ostream& log,
                       std::optional<std::filesystem::path> metrics_path) {
  TrainConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  const DataSplits data = load_splits(cfg.data);
  TrainOutcome outcome = run_training(cfg, data, false, log);
  save_model(outcome.model, out_path);
  write_file_atomic(metrics_path.value_or(default_metrics_path(out_path)), metrics_text(outcome.metrics));
  return outcome;
}

Dataset load_eval_data(const std::string& spec, const ModelFile& model) {
  Dataset data;
  if (spec.empty()) {
    data = load_splits(config_of(model).data).test;
  } else if (spec.rfind("config:", 0) == 0) {
    data = load_splits(load_config(spec.substr(7)).data).test;
  } else if (spec.rfind("idx:", 0) == 0) {
    const auto parts = split(spec.substr(4), ',');
    if (parts.size() != 2) throw std::invalid_argument("data spec idx:IMAGES,LABELS expected");
    data = load_idx(parts[0], parts[1]);
    if (!model.meta.normalization.empty()) apply_normalization(data, model.meta.normalization);
  } else if (spec.rfind("csv:", 0) == 0) {
    const auto parts = split(spec.substr(4), ',');
    if (parts.empty() || parts.size() > 3) throw std::invalid_argument("data spec csv:PATH[,CxHxW[,SCALE]] expected");
    CsvLayout layout;
    const Shape3 shape = parts.size() >= 2 ? parse_shape_arg(parts[1]) : model.net.input_shape;
    layout.channels = shape.channels;
    layout.height = shape.height;
    layout.width = shape.width;
    if (parts.size() == 3) layout.scale = std::stod(parts[2]);
    data = load_csv(parts[0], layout);
    if (!model.meta.normalization.empty()) apply_normalization(data, model.meta.normalization);
  } else {
    throw std::invalid_argument("unknown data spec '" + spec + "' (use config:, idx: or csv:)");
  }
  if (data.sample_shape() != model.net.input_shape) {
    throw std::invalid_argument("shape mismatch: data samples are " + data.sample_shape().str() +
                                " but the model expects " + model.net.input_shape.str());
  }
  if (data.class_count > model.net.class_count()) {
    throw std::invalid_argument("shape mismatch: data has " + std::to_string(data.class_count) +
                                " classes but the model outputs " +
                                std::to_string(model.net.class_count()));
  }
  return data;
}

ReportDocument cmd_compress(const std::filesystem::path& model_path, double energy,
                            const std::filesystem::path& out_path,
                            const std::filesystem::path& report_path, const std::string& data_spec,
                            std::ostream& log) {
  const ModelFile model = load_model(model_path);
  CompressionConfig ccfg;
  ccfg.energy = energy;
  ReportDocument doc;
  doc.model_path = model_path.string();
  std::optional<TrainConfig> cfg;
  if (!model.meta.config_text.empty()) {
    cfg = parse_config(model.meta.config_text);
    ccfg.zero_unit_tol = cfg->zero_unit_tol;
    doc.tau = cfg->tau;
    doc.lambda_first = cfg->lambda_first;
    doc.lambda_rest = cfg->lambda_rest;
    doc.alpha = cfg->alpha;
  }
  auto [compressed, report] = compress_network(model.net, ccfg);
  if (cfg || !data_spec.empty()) {
    const Dataset eval = load_eval_data(data_spec, model);
    report.accuracy_before = accuracy(model.net, eval);
    report.accuracy_after = accuracy(compressed, eval);
  }
  doc.report = std::move(report);
  ModelFile out = model;
  out.net = std::move(compressed);
  save_model(out, out_path);
  write_file_atomic(report_path, report_to_json(doc));
  const CompressionReport& r = doc.report;
  log << "params " << r.params_before << " -> " << r.params_after << ", MACs " << r.macs_before
      << " -> " << r.macs_after;
  if (r.accuracy_before) log << ", accuracy " << *r.accuracy_before << " -> " << *r.accuracy_after;
  log << "\n";
  for (const std::string& w : r.warnings) log << "warning: " << w << "\n";
  return doc;
}

EvaluateResult cmd_evaluate(const std::filesystem::path& model_path, const std::string& data_spec,
                            std::ostream& out) {
  const ModelFile model = load_model(model_path);
  const Dataset data = load_eval_data(data_spec, model);
  EvaluateResult result;
  result.samples = data.size();
  result.accuracy = accuracy(model.net, data);
  result.correct = static_cast<Index>(std::llround(result.accuracy * static_cast<double>(result.samples)));
  char buf[160];
  std::snprintf(buf, sizeof buf, "{\"accuracy\":%.17g,\"correct\":%lld,\"samples\":%lld}\n",
                result.accuracy, static_cast<long long>(result.correct),
                static_cast<long long>(result.samples));
  out << buf;
  return result;
}

ReloadFinetuneOutcome run_reload_finetune(const TrainConfig& cfg, const DataSplits& data,
                                          std::optional<ModelFile> start, std::ostream& log) {
  if (!cfg.reload_epoch) throw std::invalid_argument("reload-finetune needs a reload epoch");
  const Index reload_at = *cfg.reload_epoch;
  ReloadFinetuneOutcome outcome;
  TrainState state = initial_state(cfg, data);
  if (start) {
    if (start->net.layers.size() != state.net.layers.size() ||
        start->net.input_shape != state.net.input_shape) {
      throw std::invalid_argument("starting model does not match the config architecture");
    }
    if (static_cast<Index>(start->meta.epoch) > reload_at) {
      throw std::invalid_argument("starting model has trained past the reload epoch");
    }
    state.net = std::move(start->net);
    state.momentum = zero_gradients(state.net);
    state.epochs_done = static_cast<Index>(start->meta.epoch);
  }
  bool mark_reload = false;
  TrainOptions options;
  options.record_timing = true;
  options.on_epoch = [&](const EpochMetrics& m) {
    EpochMetrics copy = m;
    copy.reloaded = mark_reload;
    mark_reload = false;
    outcome.train.metrics.push_back(copy);
    print_epoch(log, copy);
  };
  train_epochs(state, cfg, data, reload_at, options);
  outcome.reload = reload_prune(state, cfg);
  log << "reload at epoch " << reload_at << ": params " << outcome.reload.params_before << " -> "
      << outcome.reload.params_after << "\n";
  for (const std::string& w : outcome.reload.warnings) log << "warning: " << w << "\n";
  mark_reload = true;
  train_epochs(state, cfg, data, cfg.epochs, options);
  outcome.train.model = to_model_file(state, cfg, data);
  return outcome;
}

ReloadFinetuneOutcome cmd_reload_finetune(const std::filesystem::path& config_path,
                                          std::optional<Index> reload_epoch,
                                          const std::filesystem::path& out_path,
                                          std::optional<std::filesystem::path> model_path,
                                          std::ostream& log,
                                          std::optional<std::filesystem::path> metrics_path) {
  TrainConfig cfg = load_config(config_path);
  if (reload_epoch) cfg.reload_epoch = *reload_epoch;
  cfg.validate();
  const DataSplits data = load_splits(cfg.data);
  std::optional<ModelFile> start;
  if (model_path) start = load_model(*model_path);
  ReloadFinetuneOutcome outcome = run_reload_finetune(cfg, data, std::move(start), log);
  save_model(outcome.train.model, out_path);
  write_file_atomic(metrics_path.value_or(default_metrics_path(out_path)),
                    metrics_text(outcome.train.metrics));
  return outcome;
}

void cmd_report(const std::vector<std::filesystem::path>& reports, const std::filesystem::path& out_csv) {
  write_file_atomic(out_csv, consolidate_reports(reports));
}

}  // namespace catn
