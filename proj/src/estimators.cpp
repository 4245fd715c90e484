#include "fewmeta/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fewmeta {

WeightSet::WeightSet(std::vector<double> w, WeightLevel level, WeightScheme scheme)
    : w_(std::move(w)), level_(level), scheme_(scheme) {
    for (double x : w_) {
        if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError("weights must be positive and finite");
    }
}

WeightSet WeightSet::common_effect(std::span<const double> se, WeightLevel level) {
    std::vector<double> w;
    w.reserve(se.size());
    for (double s : se) w.push_back(1.0 / (s * s));
    return WeightSet(std::move(w), level, WeightScheme::CommonEffect);
}

WeightSet WeightSet::random_effects(std::span<const double> se, double tau2) {
    if (!(tau2 >= 0.0)) throw ValidationError("tau2 must be non-negative");
    std::vector<double> w;
    w.reserve(se.size());
    for (double s : se) w.push_back(1.0 / (s * s + tau2));
    return WeightSet(std::move(w), WeightLevel::Study, WeightScheme::RandomEffects);
}

WeightSet WeightSet::from_weights(std::vector<double> w, WeightLevel level, WeightScheme scheme) {
    return WeightSet(std::move(w), level, scheme);
}

double WeightSet::sum() const noexcept { return std::accumulate(w_.begin(), w_.end(), 0.0); }

double WeightSet::sum_of_squares() const noexcept {
    double s = 0.0;
    for (double x : w_) s += x * x;
    return s;
}

std::vector<double> SubgroupTable::study_weights() const {
    std::vector<double> w(k());
    for (std::size_t i = 0; i < k(); ++i) {
        w[i] = 1.0 / (se[i][0] * se[i][0]) + 1.0 / (se[i][1] * se[i][1]);
    }
    return w;
}

void SubgroupTable::assign(std::size_t i, const SubgroupSplit& split) {
    const auto& a1 = split.arms[0].j == 1 ? split.arms[0] : split.arms[1];
    const auto& a2 = split.arms[0].j == 1 ? split.arms[1] : split.arms[0];
    y.at(i) = {a1.y, a2.y};
    se.at(i) = {a1.se, a2.se};
    prevalence.at(i) = prevalence_of(split).value();
}

StudyTable study_table(const MetaDataset& ds) { return StudyTable{ds.effects(), ds.standard_errors()}; }

SubgroupTable subgroup_table(const MetaDataset& ds) {
    SubgroupTable t;
    t.y.resize(ds.size());
    t.se.resize(ds.size());
    t.prevalence.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds[i];
        if (!s.selected) {
            throw ValidationError("study " + s.estimate.study_id +
                                  " has no selected subgroup split; subgroup-level estimators need one per study");
        }
        t.assign(i, s.splits[*s.selected]);
    }
    return t;
}

std::string_view to_string(TauMethod m) {
    switch (m) {
        case TauMethod::DL: return "DL";
        case TauMethod::DLS: return "DLS";
        case TauMethod::DLS_ADJ: return "DLS_ADJ";
        case TauMethod::MAX1: return "MAX1";
        case TauMethod::MAX2: return "MAX2";
    }
    return "?";
}

HeterogeneityEstimate make_estimate(TauMethod method, double raw, EstimateSide side) {
    HeterogeneityEstimate e;
    e.method = method;
    e.tau2_raw = raw;
    e.tau2 = std::max(0.0, raw);
    e.is_zero = e.tau2 == 0.0;
    e.winner = side;
    return e;
}

double mu_ce(std::span<const double> y, const WeightSet& w) {
    if (y.empty()) throw ValidationError("mu_ce of an empty sample");
    if (y.size() != w.size()) throw ValidationError("effects and weights differ in length");
    double sw = 0.0;
    double swy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sw += w[i];
        swy += w[i] * y[i];
    }
    return swy / sw;
}

PooledEstimate mu_re(std::span<const double> y, std::span<const double> se, double tau2) {
    const auto w = WeightSet::random_effects(se, tau2);
    return PooledEstimate{mu_ce(y, w), 1.0 / w.sum()};
}

double cochran_q(std::span<const double> y, std::span<const double> se) {
    const auto w = WeightSet::common_effect(se);
    const double mu = mu_ce(y, w);
    double q = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) q += w[i] * (y[i] - mu) * (y[i] - mu);
    return q;
}

HeterogeneityEstimate tau2_dl(const StudyTable& t) {
    if (t.k() < 2) throw ValidationError("DerSimonian-Laird needs at least 2 studies");
    const auto w = WeightSet::common_effect(t.se);
    const double sw = w.sum();
    const double denom = sw - w.sum_of_squares() / sw;
    if (!(denom > 0.0)) throw ValidationError("degenerate DerSimonian-Laird denominator");
    const double q = cochran_q(t.y, t.se);
    return make_estimate(TauMethod::DL, (q - static_cast<double>(t.k() - 1)) / denom, EstimateSide::Study);
}

HeterogeneityEstimate tau2_dl(const MetaDataset& ds) { return tau2_dl(study_table(ds)); }

namespace {

struct ArmSums {
    double w = 0.0;   // sum w_ij
    double w2 = 0.0;  // sum w_ij^2
    double cross = 0.0;  // sum_i w_i1 w_i2
};

ArmSums arm_sums(const SubgroupTable& t) {
    ArmSums s;
    for (std::size_t i = 0; i < t.k(); ++i) {
        const double w1 = 1.0 / (t.se[i][0] * t.se[i][0]);
        const double w2 = 1.0 / (t.se[i][1] * t.se[i][1]);
        s.w += w1 + w2;
        s.w2 += w1 * w1 + w2 * w2;
        s.cross += w1 * w2;
    }
    return s;
}

void require_subgroups(const SubgroupTable& t) {
    if (t.k() < 2) throw ValidationError("subgroup-level estimators need at least 2 studies");
}

}  // namespace

double mu_ce_subgroup(const SubgroupTable& t) {
    if (t.k() == 0) throw ValidationError("mu_ce of an empty sample");
    double sw = 0.0;
    double swy = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) {
        for (int j = 0; j < 2; ++j) {
            const double w = 1.0 / (t.se[i][j] * t.se[i][j]);
            sw += w;
            swy += w * t.y[i][j];
        }
    }
    return swy / sw;
}

double q_subgroup(const SubgroupTable& t) {
    require_subgroups(t);
    const double mu = mu_ce_subgroup(t);
    double q = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) {
        for (int j = 0; j < 2; ++j) {
            const double r = t.y[i][j] - mu;
            q += r * r / (t.se[i][j] * t.se[i][j]);
        }
    }
    return q;
}

double q_subgroup(const MetaDataset& ds) { return q_subgroup(subgroup_table(ds)); }

HeterogeneityEstimate tau2_dls(const SubgroupTable& t) {
    require_subgroups(t);
    const auto s = arm_sums(t);
    const double denom = s.w - s.w2 / s.w;
    if (!(denom > 0.0)) throw ValidationError("degenerate subgroup-level denominator");
    const double dof = 2.0 * static_cast<double>(t.k()) - 1.0;
    return make_estimate(TauMethod::DLS, (q_subgroup(t) - dof) / denom, EstimateSide::Subgroup);
}

HeterogeneityEstimate tau2_dls(const MetaDataset& ds) { return tau2_dls(subgroup_table(ds)); }

ShrinkageTerms shrinkage_terms(const SubgroupTable& t) {
    require_subgroups(t);
    const auto s = arm_sums(t);
    const double denom = s.w * s.w - s.w2;
    if (!(denom > 0.0)) throw ValidationError("degenerate shrinkage denominator");
    double wpq = 0.0;
    for (std::size_t i = 0; i < t.k(); ++i) {
        const double p = t.prevalence[i];
        const double wi = 1.0 / (t.se[i][0] * t.se[i][0]) + 1.0 / (t.se[i][1] * t.se[i][1]);
        wpq += wi * p * (1.0 - p);
    }
    return ShrinkageTerms{1.0 - 2.0 * s.cross / denom, wpq * s.w / denom};
}

ShrinkageTerms shrinkage_terms(const MetaDataset& ds) { return shrinkage_terms(subgroup_table(ds)); }

HeterogeneityEstimate tau2_dls_adj(const SubgroupTable& t) {
    const auto dls = tau2_dls(t);
    const double a = shrinkage_terms(t).A;
    if (!(a > 0.0)) throw std::logic_error("shrinkage factor A must be positive");
    return make_estimate(TauMethod::DLS_ADJ, dls.tau2_raw / a, EstimateSide::Subgroup);
}

HeterogeneityEstimate tau2_dls_adj(const MetaDataset& ds) { return tau2_dls_adj(subgroup_table(ds)); }

HeterogeneityEstimate tau2_max(const HeterogeneityEstimate& dl, const HeterogeneityEstimate& subgroup,
                               MaxVariant variant) {
    const auto method = variant == MaxVariant::Max1 ? TauMethod::MAX1 : TauMethod::MAX2;
    const bool sub_wins = subgroup.tau2 > dl.tau2;
    // max{0, max(raw)} equals the max of the truncated values.
    return make_estimate(method, std::max(dl.tau2_raw, subgroup.tau2_raw),
                         sub_wins ? EstimateSide::Subgroup : EstimateSide::Study);
}

HeterogeneityEstimate tau2_max(const MetaDataset& ds, MaxVariant variant) {
    const auto dl = tau2_dl(ds);
    const auto sub = subgroup_table(ds);
    return tau2_max(dl, variant == MaxVariant::Max1 ? tau2_dls(sub) : tau2_dls_adj(sub), variant);
}

double expected_tau2_dls(const SubgroupTable& t, double tau, double delta, double sigma_delta) {
    if (!(tau >= 0.0) || !(sigma_delta >= 0.0)) {
        throw ValidationError("tau and sigma_Delta must be non-negative");
    }
    const auto s = shrinkage_terms(t);
    return s.A * tau * tau + (delta * delta + sigma_delta * sigma_delta) * s.B_coefficient;
}

HeterogeneitySet estimate_all(const StudyTable& study, const SubgroupTable& sub) {
    HeterogeneitySet h;
    h.dl = tau2_dl(study);
    h.q = cochran_q(study.y, study.se);
    h.dls = tau2_dls(sub);
    h.shrinkage = shrinkage_terms(sub);
    h.dls_adj = make_estimate(TauMethod::DLS_ADJ, h.dls.tau2_raw / h.shrinkage.A, EstimateSide::Subgroup);
    h.max1 = tau2_max(h.dl, h.dls, MaxVariant::Max1);
    h.max2 = tau2_max(h.dl, h.dls_adj, MaxVariant::Max2);
    h.q_s = q_subgroup(sub);
    return h;
}

}  // namespace fewmeta
