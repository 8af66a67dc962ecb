#pragma once

#include <string>
#include <vector>

#include "graftcert/verifier.hpp"

namespace graftcert {

struct ReportRow {
  std::string run;
  SuiteMetrics metrics;
  std::string config_hash;
};

// Rows sorted by run name.
std::vector<ReportRow> sort_rows(std::vector<ReportRow> rows);

// Columns: run,SA,RA,VA,UNR,Time,config_hash.
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);

// A metrics file written by `certify`: {"run":..,"config_hash":..,"metrics":{...}}.
ReportRow report_row_from_json(const std::string& text);
std::string report_row_to_json(const ReportRow& row);

}  // namespace graftcert
