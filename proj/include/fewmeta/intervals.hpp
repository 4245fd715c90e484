// Confidence intervals for the overall mean: the study-level competitors
// (normal approximation, HKSJ, modified Knapp-Hartung, robust ZH) and the
// Henmi-Copas type interval fed by subgroup-level heterogeneity.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fewmeta/estimators.hpp"

namespace fewmeta {

enum class CIMethod { Normal, HKSJ, MKH, ZH, HCS_Max1, HCS_Max2 };

std::string_view to_string(CIMethod m);
std::optional<CIMethod> ci_method_from_string(std::string_view s);

inline constexpr CIMethod kAllMethods[] = {CIMethod::Normal, CIMethod::HKSJ,     CIMethod::MKH,
                                           CIMethod::ZH,     CIMethod::HCS_Max1, CIMethod::HCS_Max2};

struct IntervalResult {
    CIMethod method = CIMethod::Normal;
    double point = 0.0;
    double variance = 0.0;
    std::optional<int> df;  // empty for the normal approximation
    double quantile = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    /// Heterogeneity value plugged into the variance.
    double tau2 = 0.0;
    /// HCS only: no subgroup data, study-level Henmi-Copas with tau2_DL used.
    bool fallback = false;

    double length() const noexcept { return upper - lower; }
    bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

struct CIMethodConfig {
    CIMethod method = CIMethod::Normal;
    double level = 0.95;
    int zh_penalty_C = 2;
};

/// Memoised t_quantile; the simulation asks for the same few values often.
double cached_t_quantile(int df, double p);

IntervalResult ci_normal(const StudyTable& t, double tau2_dl, double level);
IntervalResult ci_normal(const StudyTable& t, double level = 0.95);
IntervalResult ci_hksj(const StudyTable& t, double level = 0.95);
IntervalResult ci_mkh(const StudyTable& t, double level = 0.95);
IntervalResult ci_zh(const StudyTable& t, double level = 0.95, int penalty_C = 2);

/// The HKSJ scaling factor q = sum w_RE (y - mu_RE)^2 / (k - 1).
double hksj_factor(const StudyTable& t, double tau2);

/// (tau2 * sum w^2 + sum w) / (sum w)^2 for common-effect study weights w.
double variance_hcs(double tau2, const WeightSet& ce_weights);

/// mu_CE +- t_df sqrt(V_HCS) with tau2_max plugged in; df is 2k - 1 when the
/// subgroup side strictly wins the maximum and k - 1 otherwise. Study weights
/// are the per-study sums of the selected arms' weights.
IntervalResult ci_hcs(const SubgroupTable& sub, const HeterogeneityEstimate& tau2_max, double level = 0.95);
/// Study-level Henmi-Copas interval with tau2_DL and df k - 1.
IntervalResult ci_hcs_fallback(const StudyTable& t, double level = 0.95);
/// Uses the selected splits; falls back when no study has one selected.
IntervalResult ci_hcs(const MetaDataset& ds, MaxVariant variant, double level = 0.95);

IntervalResult run_method(const MetaDataset& ds, const CIMethodConfig& config);

/// Variances compared by the degenerate-heterogeneity ordering
/// V_HKSJ <= V_CE = V_mKH <= V_HCS(max1) <= V_HCS(max2), which must hold
/// whenever Q < k - 1.
struct VarianceChain {
    bool applicable = false;  // Q < k - 1
    double hksj = 0.0;
    double ce = 0.0;
    double mkh = 0.0;
    double hcs_max1 = 0.0;
    double hcs_max2 = 0.0;

    /// Each link compared with relative slack `rel`; the study-level weight
    /// and the summed arm weights of one study agree only to rounding.
    bool holds(double rel = 1e-12) const noexcept;
};

VarianceChain variance_chain(const StudyTable& study, const SubgroupTable& sub);

struct AnalysisConfig {
    std::vector<CIMethod> methods{std::begin(kAllMethods), std::end(kAllMethods)};
    double level = 0.95;
    int zh_penalty_C = 2;
};

struct MethodOutcome {
    CIMethod method = CIMethod::Normal;
    std::optional<IntervalResult> result;
    std::string error;
};

/// Every configured method in configuration order; failures are recorded,
/// not thrown.
std::vector<MethodOutcome> run_all_methods(const MetaDataset& ds, const AnalysisConfig& config = {});

}  // namespace fewmeta
