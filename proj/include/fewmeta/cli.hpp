// The `fewmeta` command line: analyze, select, simulate and validate.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fewmeta/simulation.hpp"

namespace fewmeta::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationError = 2,
    kBudgetExceeded = 3,
    kCheckFailure = 4,
};

/// args[0] is the program name. Diagnostics and error objects go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// "1/3" or "0.25".
double parse_fraction(std::string_view text);

/// Flat key=value file; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

/// One row per scenario x method x metric.
std::string metrics_csv(const std::vector<ScenarioMetrics>& metrics);
nlohmann::json metrics_json(const std::vector<ScenarioMetrics>& metrics);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// t-quantile references, the expectation oracle and a variance-chain sweep.
std::vector<CheckResult> run_self_checks(int expectation_reps = 20000, int chain_datasets = 5000);

}  // namespace fewmeta::cli
