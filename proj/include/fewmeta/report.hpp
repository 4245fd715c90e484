// Analysis report: everything `fewmeta analyze` computes for one dataset,
// with a versioned JSON form and a plain-text forest-plot style table.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fewmeta/estimators.hpp"
#include "fewmeta/intervals.hpp"
#include "fewmeta/selection.hpp"

namespace fewmeta {

inline constexpr int kReportSchemaVersion = 1;

enum class SelectionMode { None, Given, Local, Global, PValue };

std::string_view to_string(SelectionMode m);
std::optional<SelectionMode> selection_mode_from_string(std::string_view s);

struct ReportOptions {
    SelectionMode selection = SelectionMode::Global;
    AnalysisConfig analysis;
    std::uint64_t max_combinations = kDefaultMaxCombinations;
    unsigned jobs = 1;
    /// Presentation only: tables show exp(.) of the linear-scale results.
    bool exponentiate = false;
};

/// Half-up rounding to `decimals` places; a 1e-9 nudge keeps decimal ties
/// such as 0.7105 (stored just below) rounding up.
double round_half_up(double v, int decimals = 3);

struct StudySummary {
    std::string study_id;
    std::string label;
    std::size_t splits = 0;
    std::optional<std::string> selected;
    bool derived = false;
};

struct NamedError {
    std::string method;
    std::string error;
};

struct AnalysisReport {
    std::string source;
    std::vector<StudySummary> studies;
    SelectionMode selection_mode = SelectionMode::Global;
    double level = 0.95;
    int zh_penalty_C = 2;
    bool exponentiate = false;

    std::optional<SelectionResult> selection;
    double q = 0.0;
    std::optional<double> q_s;
    std::optional<ShrinkageTerms> shrinkage;
    std::vector<HeterogeneityEstimate> heterogeneity;
    std::vector<NamedError> heterogeneity_errors;
    std::vector<MethodOutcome> intervals;
    std::vector<ConsistencyGap> consistency_gaps;

    std::size_t k() const noexcept { return studies.size(); }
};

/// Selects splits per `options.selection`, then runs every estimator and
/// interval method. Selection failures propagate (BudgetExceeded,
/// ValidationError); per-method failures are recorded.
AnalysisReport build_report(const MetaDataset& ds, const ReportOptions& options, std::string source = {});

nlohmann::json report_to_json(const AnalysisReport& r);
AnalysisReport report_from_json(const nlohmann::json& j);

/// Text table: one line per interval method, then the estimators.
std::string render_table(const AnalysisReport& r);

}  // namespace fewmeta
