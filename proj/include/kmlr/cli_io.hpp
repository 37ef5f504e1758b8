#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"
#include "kmlr/sim_harness.hpp"

namespace kmlr {

struct CsvTable {
  Matrix values;
  std::vector<std::string> header;  // empty when the file has none
};

// Comma-separated numbers; ragged rows, non-numeric cells and NaN/Inf are
// reported with 1-based row and column numbers.
CsvTable parse_csv(std::istream& in, bool header);
CsvTable read_csv(const std::string& path, bool header);
void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header = {});
void write_csv_file(const std::string& path, const Matrix& values, const std::vector<std::string>& header = {});
// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

nlohmann::json record_to_json(const RepRecord& r);
void write_results(std::ostream& out, const std::vector<RepRecord>& records);

// Config keys mirror ExperimentConfig; unknown keys raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

nlohmann::json trace_to_json(const GibbsTrace& trace);
GibbsTrace trace_from_json(const nlohmann::json& j);

// Exit codes: 0 success, 1 data error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kmlr
