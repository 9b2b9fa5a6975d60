#pragma once

#include "catn/compressor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace catn {

inline constexpr const char* kReportFormat = "catn-compression-report";
inline constexpr int kReportVersion = 1;

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A compression report together with the regularization settings of the
/// model it came from, as written by `compress --report`.
struct ReportDocument {
  CompressionReport report;
  std::string model_path;
  double tau = 0.0;
  double lambda_first = 0.0;
  double lambda_rest = 0.0;
  double alpha = 0.0;
};

std::string report_to_json(const ReportDocument& doc);
/// Rejects documents of another format or version.
ReportDocument report_from_json(const std::string& text, const std::string& source = "report");
ReportDocument load_report(const std::filesystem::path& path);

/// Column order of the consolidated CSV.
const std::vector<std::string>& report_csv_columns();

/// One row per report, sorted by (tau, lambda_first, lambda_rest, alpha,
/// energy, source).
std::string consolidate_reports(const std::vector<std::filesystem::path>& paths);

}  // namespace catn
