#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrsir/errors.hpp"
#include "mrsir/io_util.hpp"

namespace mrsir {

// One aggregated result per (method, split, missing fraction).
struct EvalRow {
  std::string method;
  std::string split; // train | val | test
  double missing_fraction = 0.0;
  double mse = 0.0;
  double ssim = 0.0;

  bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  bool operator==(const EvalReport&) const = default;
};

enum class ReportFormat { csv, json };

inline std::string report_csv(const EvalReport& report) {
  std::string out = "method,split,missing_fraction,mse,ssim\n";
  char line[256];
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%s,%s,%.2f,%.6f,%.4f\n",
                  r.method.c_str(), r.split.c_str(), r.missing_fraction, r.mse,
                  r.ssim);
    out += line;
  }
  return out;
}

inline nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"split", r.split},
                    {"missing_fraction", r.missing_fraction},
                    {"mse", r.mse},
                    {"ssim", r.ssim}});
  return nlohmann::json{{"rows", rows}};
}

inline void write_report(const EvalReport& report, const std::string& path,
                         ReportFormat format) {
  std::string payload = format == ReportFormat::csv
                            ? report_csv(report)
                            : report_json(report).dump(2) + "\n";
  detail::write_file_bytes(
      path, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

inline EvalReport read_report_json(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(std::string("report: bad JSON: ") + e.what());
  }
  EvalReport report;
  for (const auto& r : j.at("rows")) {
    EvalRow row;
    row.method = r.at("method").get<std::string>();
    row.split = r.at("split").get<std::string>();
    row.missing_fraction = r.at("missing_fraction").get<double>();
    row.mse = r.at("mse").get<double>();
    row.ssim = r.at("ssim").get<double>();
    report.rows.push_back(std::move(row));
  }
  return report;
}

} // namespace mrsir
