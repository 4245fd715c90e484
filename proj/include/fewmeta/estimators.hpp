// Pooled effects, homogeneity statistics and the DerSimonian-Laird family of
// heterogeneity estimators at study level and at subgroup level.

#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "fewmeta/model.hpp"

namespace fewmeta {

enum class WeightLevel { Study, Subgroup };
enum class WeightScheme { CommonEffect, RandomEffects };

/// Inverse-variance weights. Common-effect weights are se^-2, random-effects
/// weights are (se^2 + tau2)^-1.
class WeightSet {
public:
    static WeightSet common_effect(std::span<const double> se, WeightLevel level = WeightLevel::Study);
    static WeightSet random_effects(std::span<const double> se, double tau2);
    /// Adopts precomputed weights; all must be positive.
    static WeightSet from_weights(std::vector<double> w, WeightLevel level, WeightScheme scheme);

    std::span<const double> values() const noexcept { return w_; }
    std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    WeightLevel level() const noexcept { return level_; }
    WeightScheme scheme() const noexcept { return scheme_; }
    double sum() const noexcept;
    double sum_of_squares() const noexcept;

private:
    WeightSet(std::vector<double> w, WeightLevel level, WeightScheme scheme);
    std::vector<double> w_;
    WeightLevel level_;
    WeightScheme scheme_;
};

/// Study-level effects and standard errors.
struct StudyTable {
    std::vector<double> y;
    std::vector<double> se;
    std::size_t k() const noexcept { return y.size(); }
};

/// The selected split of every study, arms in order (1, 2).
struct SubgroupTable {
    std::vector<std::array<double, 2>> y;
    std::vector<std::array<double, 2>> se;
    std::vector<double> prevalence;
    std::size_t k() const noexcept { return y.size(); }
    /// Per-study common-effect weight, sum over arms of se^-2.
    std::vector<double> study_weights() const;
    /// Overwrites row i with the arms of `split`, ordered by arm number.
    void assign(std::size_t i, const SubgroupSplit& split);
};

StudyTable study_table(const MetaDataset& ds);
/// Throws ValidationError unless every study has a selected split.
SubgroupTable subgroup_table(const MetaDataset& ds);

enum class TauMethod { DL, DLS, DLS_ADJ, MAX1, MAX2 };
enum class EstimateSide { Study, Subgroup };
enum class MaxVariant { Max1 = 1, Max2 = 2 };

std::string_view to_string(TauMethod m);

struct HeterogeneityEstimate {
    TauMethod method = TauMethod::DL;
    double tau2 = 0.0;      // max{0, tau2_raw}
    double tau2_raw = 0.0;  // untruncated, may be negative
    bool is_zero = true;
    /// Which side supplied the value; only differs from Study for DLS-type
    /// estimators and hybrids where the subgroup side strictly won.
    EstimateSide winner = EstimateSide::Study;
};

HeterogeneityEstimate make_estimate(TauMethod method, double raw, EstimateSide side);

double mu_ce(std::span<const double> y, const WeightSet& w);

struct PooledEstimate {
    double mu = 0.0;
    double variance = 0.0;
};

/// Random-effects mean and its model variance 1 / sum(w_RE).
PooledEstimate mu_re(std::span<const double> y, std::span<const double> se, double tau2);

double cochran_q(std::span<const double> y, std::span<const double> se);

HeterogeneityEstimate tau2_dl(const StudyTable& t);
HeterogeneityEstimate tau2_dl(const MetaDataset& ds);

/// Subgroup-level common-effect mean over all 2k arms.
double mu_ce_subgroup(const SubgroupTable& t);
/// Q_S = sum_i sum_j w_ij (y_ij - mu_CE)^2 over all 2k arms.
double q_subgroup(const SubgroupTable& t);
double q_subgroup(const MetaDataset& ds);

HeterogeneityEstimate tau2_dls(const SubgroupTable& t);
HeterogeneityEstimate tau2_dls(const MetaDataset& ds);

/// E(tau2_DLS,raw) = A tau^2 + (Delta^2 + sigma_Delta^2) B_coefficient.
struct ShrinkageTerms {
    double A = 1.0;
    double B_coefficient = 0.0;
};

ShrinkageTerms shrinkage_terms(const SubgroupTable& t);
ShrinkageTerms shrinkage_terms(const MetaDataset& ds);

HeterogeneityEstimate tau2_dls_adj(const SubgroupTable& t);
HeterogeneityEstimate tau2_dls_adj(const MetaDataset& ds);

/// Hybrid max{study DL, subgroup DLS (Max1) or DLS.adj (Max2)}. Exact ties go
/// to the study side.
HeterogeneityEstimate tau2_max(const HeterogeneityEstimate& dl, const HeterogeneityEstimate& subgroup,
                               MaxVariant variant);
HeterogeneityEstimate tau2_max(const MetaDataset& ds, MaxVariant variant);

/// Analytic mean of the untruncated DLS estimator at the given weights.
double expected_tau2_dls(const SubgroupTable& t, double tau, double delta, double sigma_delta);

/// All five estimators for one dataset with selected splits.
struct HeterogeneitySet {
    HeterogeneityEstimate dl, dls, dls_adj, max1, max2;
    ShrinkageTerms shrinkage;
    double q = 0.0;
    double q_s = 0.0;
};

HeterogeneitySet estimate_all(const StudyTable& study, const SubgroupTable& sub);

}  // namespace fewmeta
