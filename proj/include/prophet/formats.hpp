#pragma once

// On-disk formats: JSON-lines datasets, run-log CSV, config snapshots and
// evaluation reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prophet/grounding.hpp"
#include "prophet/synthdata.hpp"
#include "prophet/training.hpp"

namespace prophet {

// A dataset or config problem tied to a file position.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// printf "%.17g": enough digits to round-trip any double.
std::string format_double(double v);

// {"seed", "regions":[{"object","attribute"}], "features":[[...]], "tokens",
//  "tags", "gold_regions"} on one line, keys in that order.
std::string instance_to_json_line(const Instance& inst, const Catalog& catalog);
Instance instance_from_json(const nlohmann::json& record, const Catalog& catalog);

void write_dataset(const std::filesystem::path& path, std::span<const Instance> instances,
                   const Catalog& catalog);
// Errors name the offending line number.
std::vector<Instance> read_dataset(const std::filesystem::path& path, const Catalog& catalog);

// Header: epoch,l_ce,l_hat_ce,l_att,total,seconds. Wall time is written only
// when `include_timing` is set; otherwise the column holds 0 so that reruns
// produce identical bytes.
void write_runlog_csv(std::ostream& out, const RunLog& log, bool include_timing);

nlohmann::json config_to_json(const TrainConfig& config);
// Overlays the keys present in `j` on `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json dims_to_json(const ModelDims& dims);
ModelDims dims_from_json(const nlohmann::json& j, ModelDims base = {});

// Columns of the report CSV, in order.
const std::vector<std::string>& report_columns();
nlohmann::json report_to_json(const EvalReport& report);
// Numeric value of a report column taken from a report JSON object.
double report_field(const nlohmann::json& report, const std::string& column);

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace prophet
