#include "fewmeta/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace fewmeta {

namespace {

std::string budget_message(std::uint64_t required, std::uint64_t budget) {
    std::ostringstream os;
    os << "global search needs " << required << " combinations, budget is " << budget
       << " (raise --max-combos or use local selection)";
    return os.str();
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

BudgetExceeded::BudgetExceeded(std::uint64_t required, std::uint64_t budget)
    : std::runtime_error(budget_message(required, budget)), required_(required), budget_(budget) {}

Prevalence::Prevalence(double p) : p_(p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("prevalence must lie strictly inside (0, 1)");
    }
}

void validate(const StudyEstimate& s) {
    if (!std::isfinite(s.y)) {
        throw ValidationError("study " + s.study_id + ": effect is not finite");
    }
    if (!positive_finite(s.se)) {
        throw ValidationError("study " + s.study_id + ": standard error must be positive");
    }
    if (s.n && *s.n < 1) {
        throw ValidationError("study " + s.study_id + ": size must be a positive integer");
    }
}

void validate(const SubgroupSplit& split) {
    const auto& [a, b] = split.arms;
    if (a.j == b.j) {
        throw ValidationError("split " + split.name + ": arm identifiers must differ");
    }
    for (const auto& arm : split.arms) {
        if (arm.j != 1 && arm.j != 2) {
            throw ValidationError("split " + split.name + ": arm must be 1 or 2");
        }
        if (!std::isfinite(arm.y)) {
            throw ValidationError("split " + split.name + ": arm effect is not finite");
        }
        if (!positive_finite(arm.se)) {
            throw ValidationError("split " + split.name + ": arm standard error must be positive");
        }
        if (arm.n < 1) {
            throw ValidationError("split " + split.name + ": arm size must be a positive integer");
        }
    }
    if (split.p_interaction && !(*split.p_interaction >= 0.0 && *split.p_interaction <= 1.0)) {
        throw ValidationError("split " + split.name + ": p_interaction must lie in [0, 1]");
    }
}

Prevalence prevalence_of(const SubgroupSplit& split) {
    validate(split);
    const auto& arm1 = split.arms[0].j == 1 ? split.arms[0] : split.arms[1];
    const auto& arm2 = split.arms[0].j == 1 ? split.arms[1] : split.arms[0];
    return Prevalence(static_cast<double>(arm1.n) / (static_cast<double>(arm1.n) + arm2.n));
}

StudyEstimate aggregate_study(const SubgroupSplit& split, std::string study_id) {
    validate(split);
    double wsum = 0.0;
    double wy = 0.0;
    int n = 0;
    for (const auto& arm : split.arms) {
        const double w = 1.0 / (arm.se * arm.se);
        wsum += w;
        wy += w * arm.y;
        n += arm.n;
    }
    return StudyEstimate{std::move(study_id), wy / wsum, 1.0 / std::sqrt(wsum), n};
}

ConsistencyGap consistency_gap(const StudyRecord& study, std::size_t split_index) {
    const auto& split = study.splits.at(split_index);
    const auto agg = aggregate_study(split);
    ConsistencyGap gap;
    gap.study_id = study.estimate.study_id;
    gap.split = split.name;
    gap.y_gap = study.estimate.y - agg.y;
    gap.se_ratio = study.estimate.se / agg.se;
    const double tol = 1e-6;
    gap.warning = std::abs(gap.y_gap) > tol * std::max(1.0, std::abs(study.estimate.y)) ||
                  std::abs(gap.se_ratio - 1.0) > tol;
    return gap;
}

MetaDataset::MetaDataset(std::vector<StudyRecord> studies) : studies_(std::move(studies)) {
    std::set<std::string> ids;
    for (const auto& s : studies_) {
        validate(s.estimate);
        if (!ids.insert(s.estimate.study_id).second) {
            throw ValidationError("duplicate study_id " + s.estimate.study_id);
        }
        std::set<std::string> names;
        for (const auto& split : s.splits) {
            validate(split);
            if (!names.insert(split.name).second) {
                throw ValidationError("study " + s.estimate.study_id + ": duplicate split " +
                                      split.name);
            }
        }
        if (s.selected && *s.selected >= s.splits.size()) {
            throw ValidationError("study " + s.estimate.study_id +
                                  ": selected split index out of range");
        }
    }
}

std::vector<double> MetaDataset::effects() const {
    std::vector<double> y;
    y.reserve(studies_.size());
    for (const auto& s : studies_) y.push_back(s.estimate.y);
    return y;
}

std::vector<double> MetaDataset::standard_errors() const {
    std::vector<double> se;
    se.reserve(studies_.size());
    for (const auto& s : studies_) se.push_back(s.estimate.se);
    return se;
}

bool MetaDataset::has_any_splits() const noexcept {
    return std::any_of(studies_.begin(), studies_.end(),
                       [](const StudyRecord& s) { return !s.splits.empty(); });
}

bool MetaDataset::all_selected() const noexcept {
    return !studies_.empty() && std::all_of(studies_.begin(), studies_.end(),
                                            [](const StudyRecord& s) { return s.selected.has_value(); });
}

bool MetaDataset::any_selected() const noexcept {
    return std::any_of(studies_.begin(), studies_.end(),
                       [](const StudyRecord& s) { return s.selected.has_value(); });
}

std::vector<std::size_t> MetaDataset::split_counts() const {
    std::vector<std::size_t> counts;
    counts.reserve(studies_.size());
    for (const auto& s : studies_) counts.push_back(s.splits.size());
    return counts;
}

MetaDataset MetaDataset::with_selection(const std::vector<std::size_t>& chosen) const {
    if (chosen.size() != studies_.size()) {
        throw ValidationError("selection must name one split per study");
    }
    auto copy = studies_;
    for (std::size_t i = 0; i < copy.size(); ++i) {
        if (chosen[i] >= copy[i].splits.size()) {
            throw ValidationError("study " + copy[i].estimate.study_id +
                                  ": selected split index out of range");
        }
        copy[i].selected = chosen[i];
    }
    MetaDataset out;
    out.studies_ = std::move(copy);
    return out;
}

MetaDataset MetaDataset::without_selection() const {
    MetaDataset out = *this;
    for (auto& s : out.studies_) s.selected.reset();
    return out;
}

std::vector<ConsistencyGap> MetaDataset::consistency_gaps() const {
    std::vector<ConsistencyGap> gaps;
    for (const auto& s : studies_) {
        if (s.derived) continue;
        for (std::size_t j = 0; j < s.splits.size(); ++j) gaps.push_back(consistency_gap(s, j));
    }
    return gaps;
}

void require_analyzable(const MetaDataset& ds) {
    if (ds.size() < 2) {
        throw ValidationError("at least 2 studies are required, got " + std::to_string(ds.size()));
    }
}

}  // namespace fewmeta
