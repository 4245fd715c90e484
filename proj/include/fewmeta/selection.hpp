// Choosing one candidate split per study so that the subgroup-level Q_S is
// as large as possible.
//
// Combinations are numbered in mixed radix with study 0 as the most
// significant digit, so id 0 picks split 0 everywhere and the last study's
// choice varies fastest.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "fewmeta/model.hpp"

namespace fewmeta {

enum class SelectionStrategy { Local, Global, PValue };

std::string_view to_string(SelectionStrategy s);
std::optional<SelectionStrategy> selection_strategy_from_string(std::string_view s);

inline constexpr std::uint64_t kDefaultMaxCombinations = 1'000'000;

struct SelectionResult {
    std::vector<std::size_t> chosen;  // split index per study
    double q_s = 0.0;
    SelectionStrategy strategy = SelectionStrategy::Local;
    std::uint64_t combinations_evaluated = 0;
};

/// Product of the per-study candidate counts, saturating at UINT64_MAX.
std::uint64_t combination_count(const MetaDataset& ds);
std::vector<std::size_t> decode_combination(const MetaDataset& ds, std::uint64_t id);

/// Within-study two-group statistic sum_j w_j (y_j - y_agg)^2.
double within_study_q(const SubgroupSplit& split);

SelectionResult select_local(const MetaDataset& ds);
/// Throws BudgetExceeded when more than max_combinations would be needed.
/// jobs = 0 picks the hardware concurrency.
SelectionResult select_global(const MetaDataset& ds, std::uint64_t max_combinations = kDefaultMaxCombinations,
                              unsigned jobs = 1);
/// Smallest reported p_interaction per study; every split needs one.
SelectionResult select_pvalue(const MetaDataset& ds);

SelectionResult select(const MetaDataset& ds, SelectionStrategy strategy,
                       std::uint64_t max_combinations = kDefaultMaxCombinations, unsigned jobs = 1);

struct QsHistogram {
    std::vector<double> q_s;  // indexed by combination id
    /// 2k - 1; tau2_DLS is positive exactly when Q_S exceeds it.
    double threshold = 0.0;
};

QsHistogram qs_histogram(const MetaDataset& ds, std::uint64_t max_combinations = kDefaultMaxCombinations,
                         unsigned jobs = 1);

}  // namespace fewmeta
