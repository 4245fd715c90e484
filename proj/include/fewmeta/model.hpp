// Domain records for subgroup-informed meta-analysis of few studies.
//
// Every effect lives on the linear-predictor scale (log hazard ratio,
// log odds ratio, ...). Records are immutable once a MetaDataset has been
// built from them; all operations on them are pure.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fewmeta {

/// Malformed input data or a precondition violated by the caller.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exhaustive subgroup search would need more combinations than allowed.
class BudgetExceeded : public std::runtime_error {
public:
    BudgetExceeded(std::uint64_t required, std::uint64_t budget);
    std::uint64_t required() const noexcept { return required_; }
    std::uint64_t budget() const noexcept { return budget_; }

private:
    std::uint64_t required_;
    std::uint64_t budget_;
};

struct StudyEstimate {
    std::string study_id;
    double y = 0.0;
    double se = 1.0;
    std::optional<int> n;
};

struct SubgroupArm {
    int j = 1;  // 1 or 2
    std::string label;
    double y = 0.0;
    double se = 1.0;
    int n = 1;
};

/// A candidate two-way partition of one study.
struct SubgroupSplit {
    std::string name;
    std::array<SubgroupArm, 2> arms;
    /// Reported p-value of the within-study subgroup comparison, if any.
    std::optional<double> p_interaction;
};

/// Fraction of a study's units that fall in arm 1; strictly inside (0, 1).
class Prevalence {
public:
    explicit Prevalence(double p);
    double value() const noexcept { return p_; }

private:
    double p_;
};

void validate(const StudyEstimate& s);
void validate(const SubgroupSplit& split);

/// p = n1 / (n1 + n2).
Prevalence prevalence_of(const SubgroupSplit& split);

/// Inverse-variance combination of the two arms into one study-level
/// estimate; se = (1/se1^2 + 1/se2^2)^(-1/2), n = n1 + n2.
StudyEstimate aggregate_study(const SubgroupSplit& split, std::string study_id = {});

struct StudyRecord {
    StudyEstimate estimate;
    std::string label;
    std::vector<SubgroupSplit> splits;
    std::optional<std::size_t> selected;
    /// True when the study-level row was derived from a split, not supplied.
    bool derived = false;
};

/// Difference between a supplied study row and the aggregate of one split.
struct ConsistencyGap {
    std::string study_id;
    std::string split;
    double y_gap = 0.0;     // supplied y minus aggregated y
    double se_ratio = 1.0;  // supplied se over aggregated se
    bool warning = false;
};

ConsistencyGap consistency_gap(const StudyRecord& study, std::size_t split_index);

/// k studies, each with a study-level estimate and candidate splits.
class MetaDataset {
public:
    MetaDataset() = default;
    explicit MetaDataset(std::vector<StudyRecord> studies);

    std::size_t size() const noexcept { return studies_.size(); }
    const std::vector<StudyRecord>& studies() const noexcept { return studies_; }
    const StudyRecord& operator[](std::size_t i) const { return studies_.at(i); }

    std::vector<double> effects() const;
    std::vector<double> standard_errors() const;

    bool has_any_splits() const noexcept;
    bool all_selected() const noexcept;
    bool any_selected() const noexcept;
    std::vector<std::size_t> split_counts() const;

    /// Copy with one chosen split per study (index into that study's splits).
    MetaDataset with_selection(const std::vector<std::size_t>& chosen) const;
    MetaDataset without_selection() const;

    std::vector<ConsistencyGap> consistency_gaps() const;

private:
    std::vector<StudyRecord> studies_;
};

/// Throws ValidationError when fewer than two studies are present.
void require_analyzable(const MetaDataset& ds);

}  // namespace fewmeta
