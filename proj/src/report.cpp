#include "catn/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace catn {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_json(const ReportDocument& doc) {
  const CompressionReport& r = doc.report;
  json layers = json::array();
  for (const LayerCompression& l : r.layers) {
    layers.push_back({{"layer", l.layer_index},
                      {"kind", to_string(l.kind)},
                      {"units", l.units},
                      {"kept_units", l.kept_units},
                      {"in_channels", l.in_channels},
                      {"kept_channels", l.kept_channels},
                      {"rank", l.rank},
                      {"factorized", l.factorized},
                      {"params_before", l.params_before},
                      {"params_after", l.params_after},
                      {"macs_before", l.macs_before},
                      {"macs_after", l.macs_after}});
  }
  json j = {{"format", kReportFormat},
            {"version", kReportVersion},
            {"model", doc.model_path},
            {"tau", doc.tau},
            {"lambda_first", doc.lambda_first},
            {"lambda_rest", doc.lambda_rest},
            {"alpha", doc.alpha},
            {"energy", r.config.energy},
            {"zero_unit_tol", r.config.zero_unit_tol},
            {"zero_sv_rel_tol", r.config.zero_sv_rel_tol},
            {"params_before", r.params_before},
            {"params_after", r.params_after},
            {"macs_before", r.macs_before},
            {"macs_after", r.macs_after},
            {"accuracy_before", optional_number(r.accuracy_before)},
            {"accuracy_after", optional_number(r.accuracy_after)},
            {"warnings", r.warnings},
            {"layers", layers}};
  return j.dump(2) + "\n";
}

ReportDocument report_from_json(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ReportError(source + ": not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != kReportFormat) {
    throw ReportError(source + ": not a compression report");
  }
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != kReportVersion) {
    throw ReportError(source + ": report version " +
                      (j.contains("version") ? j.at("version").dump() : std::string("missing")) +
                      " is not supported (expected " + std::to_string(kReportVersion) + ")");
  }
  try {
    ReportDocument doc;
    doc.model_path = j.value("model", std::string());
    doc.tau = j.at("tau").get<double>();
    doc.lambda_first = j.at("lambda_first").get<double>();
    doc.lambda_rest = j.at("lambda_rest").get<double>();
    doc.alpha = j.at("alpha").get<double>();
    CompressionReport& r = doc.report;
    r.config.energy = j.at("energy").get<double>();
    r.config.zero_unit_tol = j.at("zero_unit_tol").get<double>();
    r.config.zero_sv_rel_tol = j.at("zero_sv_rel_tol").get<double>();
    r.params_before = j.at("params_before").get<Index>();
    r.params_after = j.at("params_after").get<Index>();
    r.macs_before = j.at("macs_before").get<Index>();
    r.macs_after = j.at("macs_after").get<Index>();
    r.accuracy_before = read_optional(j, "accuracy_before");
    r.accuracy_after = read_optional(j, "accuracy_after");
    r.warnings = j.value("warnings", std::vector<std::string>{});
    for (const json& l : j.at("layers")) {
      LayerCompression c;
      c.layer_index = l.at("layer").get<std::size_t>();
      const auto kind = layer_kind_from_string(l.at("kind").get<std::string>());
      if (!kind) throw ReportError(source + ": unknown layer kind " + l.at("kind").dump());
      c.kind = *kind;
      c.units = l.at("units").get<Index>();
      c.kept_units = l.at("kept_units").get<Index>();
      c.in_channels = l.at("in_channels").get<Index>();
      c.kept_channels = l.at("kept_channels").get<Index>();
      c.rank = l.at("rank").get<Index>();
      c.factorized = l.at("factorized").get<bool>();
      c.params_before = l.at("params_before").get<Index>();
      c.params_after = l.at("params_after").get<Index>();
      c.macs_before = l.at("macs_before").get<Index>();
      c.macs_after = l.at("macs_after").get<Index>();
      r.layers.push_back(c);
    }
    return doc;
  } catch (const json::exception& e) {
    throw ReportError(source + ": malformed report: " + e.what());
  }
}

ReportDocument load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot open report " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str(), path.string());
}

const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> columns = {
      "source",          "tau",           "lambda_first", "lambda_rest",
      "alpha",           "energy",        "accuracy_before", "accuracy_after",
      "params_before",   "params_after",  "macs_before",  "macs_after"};
  return columns;
}

std::string consolidate_reports(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw ReportError("report: at least one report is required");
  std::vector<std::pair<std::string, ReportDocument>> rows;
  for (const auto& p : paths) rows.emplace_back(p.string(), load_report(p));
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    const ReportDocument& x = a.second;
    const ReportDocument& y = b.second;
    return std::tie(x.tau, x.lambda_first, x.lambda_rest, x.alpha, x.report.config.energy, a.first) <
           std::tie(y.tau, y.lambda_first, y.lambda_rest, y.alpha, y.report.config.energy, b.first);
  });
  std::ostringstream out;
  const auto& cols = report_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& [src, doc] : rows) {
    const CompressionReport& r = doc.report;
    out << csv_field(src) << "," << fmt(doc.tau) << "," << fmt(doc.lambda_first) << ","
        << fmt(doc.lambda_rest) << "," << fmt(doc.alpha) << "," << fmt(r.config.energy) << ","
        << opt(r.accuracy_before) << "," << opt(r.accuracy_after) << "," << r.params_before << ","
        << r.params_after << "," << r.macs_before << "," << r.macs_after << "\n";
  }
  return out.str();
}

}  // namespace catn
