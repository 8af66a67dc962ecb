#include "graftcert/report.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "json_util.hpp"

namespace graftcert {

using nlohmann::json;

std::vector<ReportRow> sort_rows(std::vector<ReportRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.run < b.run; });
  return rows;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json metrics_object(const SuiteMetrics& m) { return json::parse(metrics_to_json(m)); }

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "run,SA,RA,VA,UNR,Time,config_hash\n";
  for (const ReportRow& r : sort_rows(rows)) {
    const SuiteMetrics& m = r.metrics;
    out += r.run + "," + fixed(m.sa, 2) + "," + fixed(m.ra, 2) + "," + fixed(m.va, 2) + "," + fixed(m.unr, 2) + "," +
           fixed(m.time_sec, 4) + "," + r.config_hash + "\n";
  }
  return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
  json arr = json::array();
  for (const ReportRow& r : sort_rows(rows)) {
    arr.push_back({{"run", r.run}, {"config_hash", r.config_hash}, {"metrics", metrics_object(r.metrics)}});
  }
  return arr.dump(2);
}

ReportRow report_row_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("metrics file: ") + e.what());
  }
  ReportRow r;
  r.run = detail::get_string(j, "run", "metrics file");
  r.config_hash = detail::get_string(j, "config_hash", "metrics file");
  r.metrics = metrics_from_json(detail::require(j, "metrics", "metrics file").dump());
  return r;
}

std::string report_row_to_json(const ReportRow& row) {
  const json j = {{"run", row.run}, {"config_hash", row.config_hash}, {"metrics", metrics_object(row.metrics)}};
  return j.dump(2);
}

}  // namespace graftcert
