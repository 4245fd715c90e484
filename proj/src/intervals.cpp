#include "fewmeta/intervals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <utility>

#include "fewmeta/distributions.hpp"

namespace fewmeta {

std::string_view to_string(CIMethod m) {
    switch (m) {
        case CIMethod::Normal: return "NORMAL";
        case CIMethod::HKSJ: return "HKSJ";
        case CIMethod::MKH: return "MKH";
        case CIMethod::ZH: return "ZH";
        case CIMethod::HCS_Max1: return "HCS_MAX1";
        case CIMethod::HCS_Max2: return "HCS_MAX2";
    }
    return "?";
}

std::optional<CIMethod> ci_method_from_string(std::string_view s) {
    std::string upper(s);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto m : kAllMethods) {
        if (to_string(m) == upper) return m;
    }
    return std::nullopt;
}

double cached_t_quantile(int df, double p) {
    thread_local std::map<std::pair<int, double>, double> cache;
    const auto key = std::make_pair(df, p);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const double q = t_quantile(df, p);
    cache.emplace(key, q);
    return q;
}

namespace {

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
}

void check_studies(const StudyTable& t) {
    if (t.k() < 2) throw ValidationError("interval methods need at least 2 studies");
}

IntervalResult symmetric(CIMethod method, double point, double variance, std::optional<int> df, double level,
                         double tau2) {
    IntervalResult r;
    r.method = method;
    r.point = point;
    r.variance = variance;
    r.df = df;
    r.level = level;
    r.tau2 = tau2;
    const double p = 0.5 + 0.5 * level;
    r.quantile = df ? cached_t_quantile(*df, p) : normal_quantile(p);
    const double half = r.quantile * std::sqrt(variance);
    r.lower = point - half;
    r.upper = point + half;
    return r;
}

int study_df(const StudyTable& t) { return static_cast<int>(t.k()) - 1; }

}  // namespace

IntervalResult ci_normal(const StudyTable& t, double tau2_dl, double level) {
    check_level(level);
    check_studies(t);
    const auto re = mu_re(t.y, t.se, tau2_dl);
    return symmetric(CIMethod::Normal, re.mu, re.variance, std::nullopt, level, tau2_dl);
}

IntervalResult ci_normal(const StudyTable& t, double level) { return ci_normal(t, tau2_dl(t).tau2, level); }

double hksj_factor(const StudyTable& t, double tau2) {
    check_studies(t);
    const auto w = WeightSet::random_effects(t.se, tau2);
    const double mu = mu_ce(t.y, w);
    double q = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) q += w[i] * (t.y[i] - mu) * (t.y[i] - mu);
    return q / static_cast<double>(t.k() - 1);
}

IntervalResult ci_hksj(const StudyTable& t, double level) {
    check_level(level);
    check_studies(t);
    const double tau2 = tau2_dl(t).tau2;
    const auto re = mu_re(t.y, t.se, tau2);
    const double q = hksj_factor(t, tau2);
    return symmetric(CIMethod::HKSJ, re.mu, q * re.variance, study_df(t), level, tau2);
}

IntervalResult ci_mkh(const StudyTable& t, double level) {
    check_level(level);
    check_studies(t);
    const double tau2 = tau2_dl(t).tau2;
    const auto re = mu_re(t.y, t.se, tau2);
    const double q = std::max(1.0, hksj_factor(t, tau2));
    return symmetric(CIMethod::MKH, re.mu, q * re.variance, study_df(t), level, tau2);
}

IntervalResult ci_zh(const StudyTable& t, double level, int penalty_C) {
    check_level(level);
    check_studies(t);
    if (penalty_C < 0) throw ValidationError("ZH penalty exponent must be non-negative");
    const double tau2 = tau2_dl(t).tau2;
    const auto w = WeightSet::random_effects(t.se, tau2);
    const double sw = w.sum();
    const double mu = mu_ce(t.y, w);
    double v = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) {
        const double r = t.y[i] - mu;
        const double leverage = w[i] / sw;
        v += w[i] * w[i] * r * r / (sw * sw) * std::pow(1.0 - leverage, -penalty_C);
    }
    return symmetric(CIMethod::ZH, mu, v, study_df(t), level, tau2);
}

double variance_hcs(double tau2, const WeightSet& ce_weights) {
    if (!(tau2 >= 0.0)) throw ValidationError("tau2 must be non-negative");
    const double sw = ce_weights.sum();
    return (tau2 * ce_weights.sum_of_squares() + sw) / (sw * sw);
}

IntervalResult ci_hcs(const SubgroupTable& sub, const HeterogeneityEstimate& tau2_max, double level) {
    check_level(level);
    if (sub.k() < 2) throw ValidationError("interval methods need at least 2 studies");
    if (tau2_max.method != TauMethod::MAX1 && tau2_max.method != TauMethod::MAX2) {
        throw ValidationError("HCS interval needs a hybrid (max1/max2) heterogeneity estimate");
    }
    const auto w = WeightSet::from_weights(sub.study_weights(), WeightLevel::Study, WeightScheme::CommonEffect);
    const int k = static_cast<int>(sub.k());
    const int df = tau2_max.winner == EstimateSide::Subgroup ? 2 * k - 1 : k - 1;
    const auto method = tau2_max.method == TauMethod::MAX1 ? CIMethod::HCS_Max1 : CIMethod::HCS_Max2;
    return symmetric(method, mu_ce_subgroup(sub), variance_hcs(tau2_max.tau2, w), df, level, tau2_max.tau2);
}

IntervalResult ci_hcs_fallback(const StudyTable& t, double level) {
    check_level(level);
    check_studies(t);
    const double tau2 = tau2_dl(t).tau2;
    const auto w = WeightSet::common_effect(t.se);
    auto r = symmetric(CIMethod::HCS_Max1, mu_ce(t.y, w), variance_hcs(tau2, w), study_df(t), level, tau2);
    r.fallback = true;
    return r;
}

IntervalResult ci_hcs(const MetaDataset& ds, MaxVariant variant, double level) {
    require_analyzable(ds);
    if (!ds.any_selected()) {
        auto r = ci_hcs_fallback(study_table(ds), level);
        r.method = variant == MaxVariant::Max1 ? CIMethod::HCS_Max1 : CIMethod::HCS_Max2;
        return r;
    }
    return ci_hcs(subgroup_table(ds), tau2_max(ds, variant), level);
}

IntervalResult run_method(const MetaDataset& ds, const CIMethodConfig& config) {
    require_analyzable(ds);
    const auto t = study_table(ds);
    switch (config.method) {
        case CIMethod::Normal: return ci_normal(t, config.level);
        case CIMethod::HKSJ: return ci_hksj(t, config.level);
        case CIMethod::MKH: return ci_mkh(t, config.level);
        case CIMethod::ZH: return ci_zh(t, config.level, config.zh_penalty_C);
        case CIMethod::HCS_Max1: return ci_hcs(ds, MaxVariant::Max1, config.level);
        case CIMethod::HCS_Max2: return ci_hcs(ds, MaxVariant::Max2, config.level);
    }
    throw std::logic_error("unknown interval method");
}

bool VarianceChain::holds(double rel) const noexcept {
    auto le = [rel](double a, double b) { return a <= b * (1.0 + rel); };
    auto eq = [rel](double a, double b) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); };
    return le(hksj, ce) && eq(ce, mkh) && le(mkh, hcs_max1) && le(hcs_max1, hcs_max2);
}

VarianceChain variance_chain(const StudyTable& study, const SubgroupTable& sub) {
    check_studies(study);
    if (study.k() != sub.k()) throw ValidationError("study and subgroup tables differ in k");
    VarianceChain c;
    const double k = static_cast<double>(study.k());
    c.applicable = cochran_q(study.y, study.se) < k - 1.0;
    const auto h = estimate_all(study, sub);
    const auto re = mu_re(study.y, study.se, h.dl.tau2);
    const double q = hksj_factor(study, h.dl.tau2);
    c.ce = 1.0 / WeightSet::common_effect(study.se).sum();
    c.hksj = q * re.variance;
    c.mkh = std::max(1.0, q) * re.variance;
    const auto w = WeightSet::from_weights(sub.study_weights(), WeightLevel::Study, WeightScheme::CommonEffect);
    c.hcs_max1 = variance_hcs(h.max1.tau2, w);
    c.hcs_max2 = variance_hcs(h.max2.tau2, w);
    return c;
}

std::vector<MethodOutcome> run_all_methods(const MetaDataset& ds, const AnalysisConfig& config) {
    std::vector<MethodOutcome> out;
    out.reserve(config.methods.size());
    for (auto m : config.methods) {
        MethodOutcome o;
        o.method = m;
        try {
            o.result = run_method(ds, CIMethodConfig{m, config.level, config.zh_penalty_C});
        } catch (const std::exception& e) {
            o.error = e.what();
        }
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace fewmeta
