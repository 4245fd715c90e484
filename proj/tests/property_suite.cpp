#include "property_suite.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "fewmeta/distributions.hpp"
#include "fewmeta/estimators.hpp"
#include "fewmeta/intervals.hpp"
#include "fewmeta/selection.hpp"

namespace props {

using namespace fewmeta;

namespace {

// Small random datasets with exact se = sigma_u / sqrt(n) errors. Every split
// of a study is built around the same observed study effect, so each split
// aggregates back to the supplied study row.
struct Generated {
    MetaDataset ds;
    StudyTable study;
    SubgroupTable sub;
};

Generated generate(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> k_dist(2, 5), m_dist(1, 40), splits_dist(1, 3), pick3(0, 2);
    std::normal_distribution<double> z(0.0, 1.0);
    const double taus[] = {0.0, 0.0, 0.1, 0.5, 1.0};
    const double deltas[] = {0.0, 0.2, 1.0};
    const double sigma_us[] = {1.0, 2.0, 4.0};
    const double prevalences[] = {1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0};

    const int k = k_dist(rng);
    const double tau = taus[std::uniform_int_distribution<int>(0, 4)(rng)];
    const double delta = deltas[pick3(rng)];
    const double sigma_u = sigma_us[pick3(rng)];
    const double mu = 0.5 * z(rng);

    std::vector<StudyRecord> studies;
    for (int i = 0; i < k; ++i) {
        const int n = 12 * m_dist(rng);
        const double theta = mu + tau * z(rng);
        const double y = theta + sigma_u / std::sqrt(double(n)) * z(rng);
        StudyRecord r;
        r.estimate = StudyEstimate{"S" + std::to_string(i), y, sigma_u / std::sqrt(double(n)), n};
        r.label = r.estimate.study_id;
        const int n_splits = splits_dist(rng);
        for (int s = 0; s < n_splits; ++s) {
            const double p = prevalences[pick3(rng)];
            const int n1 = static_cast<int>(std::llround(p * n));
            const int n2 = n - n1;
            const double pa = double(n1) / n;
            // Weights are proportional to arm sizes, so p y1 + (1 - p) y2 = y.
            const double d = delta + z(rng) * sigma_u * std::sqrt(1.0 / n1 + 1.0 / n2);
            SubgroupSplit sp;
            sp.name = std::string(1, char('a' + s));
            sp.arms[0] = SubgroupArm{1, "1", y - (1 - pa) * d, sigma_u / std::sqrt(double(n1)), n1};
            sp.arms[1] = SubgroupArm{2, "2", y + pa * d, sigma_u / std::sqrt(double(n2)), n2};
            r.splits.push_back(std::move(sp));
        }
        r.selected = std::uniform_int_distribution<std::size_t>(0, r.splits.size() - 1)(rng);
        studies.push_back(std::move(r));
    }
    MetaDataset ds(std::move(studies));
    auto study = study_table(ds);
    auto sub = subgroup_table(ds);
    return {std::move(ds), std::move(study), std::move(sub)};
}

StudyTable transform(const StudyTable& t, double scale, double shift) {
    StudyTable o = t;
    for (std::size_t i = 0; i < t.k(); ++i) {
        o.y[i] = t.y[i] * scale + shift;
        o.se[i] = t.se[i] * scale;
    }
    return o;
}

SubgroupTable transform(const SubgroupTable& t, double scale, double shift) {
    SubgroupTable o = t;
    for (std::size_t i = 0; i < t.k(); ++i) {
        for (int j = 0; j < 2; ++j) {
            o.y[i][j] = t.y[i][j] * scale + shift;
            o.se[i][j] = t.se[i][j] * scale;
        }
    }
    return o;
}

std::vector<IntervalResult> all_intervals(const StudyTable& st, const SubgroupTable& sub, const HeterogeneitySet& h) {
    return {ci_normal(st), ci_hksj(st), ci_mkh(st), ci_zh(st), ci_hcs(sub, h.max1), ci_hcs(sub, h.max2)};
}

std::vector<const HeterogeneityEstimate*> estimates(const HeterogeneitySet& h) {
    return {&h.dl, &h.dls, &h.dls_adj, &h.max1, &h.max2};
}

class Recorder {
public:
    void check(const std::string& name, bool ok, const std::string& detail) {
        auto& r = results_[name];
        r.name = name;
        ++r.checked;
        if (!ok) {
            if (r.failures++ == 0) r.first_failure = detail;
        }
    }
    std::vector<PropertyResult> take(const std::vector<std::string>& order) {
        std::vector<PropertyResult> out;
        for (const auto& n : order) {
            auto r = results_[n];
            r.name = n;
            out.push_back(r);
        }
        return out;
    }

private:
    std::map<std::string, PropertyResult> results_;
};

std::string where(int instance) { return "instance " + std::to_string(instance); }

}  // namespace

std::vector<PropertyResult> run_property_suite(int instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Recorder rec;
    const double scales[] = {0.25, 0.5, 2.0, 8.0};
    const double shifts[] = {-1.3, 0.7, 2.5};

    for (int it = 0; it < instances; ++it) {
        const auto g = generate(rng);
        const auto& st = g.study;
        const auto& sub = g.sub;
        const auto h = estimate_all(st, sub);
        const std::string at = where(it);

        // Common-effect mean: study rows against subgroup arms.
        const double mu_study = mu_ce(st.y, WeightSet::common_effect(st.se));
        const double mu_sub = mu_ce_subgroup(sub);
        rec.check("mu_ce study/subgroup agreement",
                  std::abs(mu_study - mu_sub) <= 1e-12 * std::max(1.0, std::abs(mu_study)), at);

        // Variance chain under degenerate heterogeneity.
        const auto chain = variance_chain(st, sub);
        if (chain.applicable) {
            std::ostringstream d;
            d.precision(17);
            d << at << ": " << chain.hksj << " " << chain.ce << " " << chain.mkh << " " << chain.hcs_max1 << " "
              << chain.hcs_max2;
            rec.check("variance chain when Q < k-1", chain.holds(), d.str());
        }

        // Ordering and zero sets.
        rec.check("DLS.adj >= DLS", h.dls_adj.tau2 >= h.dls.tau2, at);
        rec.check("max monotonicity",
                  h.max2.tau2 >= h.max1.tau2 && h.max1.tau2 >= h.dl.tau2 && h.max1.tau2 >= h.dls.tau2 &&
                      h.max2.tau2 >= h.dls_adj.tau2 && h.dl.tau2 >= 0 && h.dls.tau2 >= 0,
                  at);
        rec.check("zero-set identity",
                  (h.max1.tau2 == 0) == (h.dl.tau2 == 0 && h.dls.tau2 == 0) &&
                      (h.max2.tau2 == 0) == (h.dl.tau2 == 0 && h.dls_adj.tau2 == 0),
                  at);

        // Intervals contain their point; width is 2 q sqrt(V).
        const auto base = all_intervals(st, sub, h);
        for (const auto& r : base) {
            const double width = 2 * r.quantile * std::sqrt(r.variance);
            rec.check("interval contains point, width = 2 q sqrt(V)",
                      r.contains(r.point) && std::abs(r.length() - width) <= 1e-12 * width,
                      at + " " + std::string(to_string(r.method)));
        }

        // Scale by a power of two: every floating operation commutes with it.
        const double c = scales[it % 4];
        {
            const auto st2 = transform(st, c, 0.0);
            const auto sub2 = transform(sub, c, 0.0);
            const auto h2 = estimate_all(st2, sub2);
            bool ok = h2.q == h.q && h2.q_s == h.q_s;
            const auto e1 = estimates(h), e2 = estimates(h2);
            for (std::size_t m = 0; m < e1.size(); ++m) {
                ok = ok && e2[m]->tau2_raw == e1[m]->tau2_raw * c * c && e2[m]->winner == e1[m]->winner;
            }
            const auto scaled = all_intervals(st2, sub2, h2);
            for (std::size_t m = 0; m < base.size(); ++m) {
                ok = ok && scaled[m].point == base[m].point * c && scaled[m].lower == base[m].lower * c &&
                     scaled[m].upper == base[m].upper * c && scaled[m].df == base[m].df;
            }
            rec.check("scale equivariance (exact, power-of-two factors)", ok, at);
        }

        // Translation: estimators unchanged, intervals shifted.
        {
            const double t = shifts[it % 3];
            const auto st2 = transform(st, 1.0, t);
            const auto sub2 = transform(sub, 1.0, t);
            const auto h2 = estimate_all(st2, sub2);
            bool ok = true;
            const auto e1 = estimates(h), e2 = estimates(h2);
            for (std::size_t m = 0; m < e1.size(); ++m) {
                ok = ok && std::abs(e2[m]->tau2_raw - e1[m]->tau2_raw) <= 1e-9 * (1 + std::abs(e1[m]->tau2_raw));
            }
            const bool near_tie =
                std::abs(h.dl.tau2 - h.dls.tau2) <= 1e-9 || std::abs(h.dl.tau2 - h.dls_adj.tau2) <= 1e-9;
            const auto shifted = all_intervals(st2, sub2, h2);
            for (std::size_t m = 0; m < base.size(); ++m) {
                if (shifted[m].df != base[m].df) {
                    ok = ok && near_tie;
                    continue;
                }
                const double tol = 1e-9 * (1 + std::abs(t) + std::abs(base[m].upper) + std::abs(base[m].lower));
                ok = ok && std::abs(shifted[m].point - (base[m].point + t)) <= tol &&
                     std::abs(shifted[m].lower - (base[m].lower + t)) <= tol &&
                     std::abs(shifted[m].upper - (base[m].upper + t)) <= tol;
            }
            rec.check("translation equivariance", ok, at);
        }

        // Selection.
        const auto local = select_local(g.ds);
        const auto global = select_global(g.ds);
        const auto hist = qs_histogram(g.ds);
        rec.check("global Q_S >= local Q_S", global.q_s >= local.q_s, at);
        rec.check("global Q_S = histogram max",
                  global.q_s == *std::max_element(hist.q_s.begin(), hist.q_s.end()) &&
                      global.q_s == q_subgroup(g.ds.with_selection(global.chosen)),
                  at);
        const auto counts = g.ds.split_counts();
        if (std::all_of(counts.begin(), counts.end(), [](std::size_t n) { return n == 1; })) {
            rec.check("single candidates: local = global", local.q_s == global.q_s && local.chosen == global.chosen,
                      at);
        }
        for (std::size_t i = 0; i < g.ds.size(); ++i) {
            if (counts[i] < 2) continue;
            std::vector<StudyRecord> rs = g.ds.studies();
            const std::size_t drop = (global.chosen[i] + 1) % counts[i];
            rs[i].splits.erase(rs[i].splits.begin() + static_cast<std::ptrdiff_t>(drop));
            for (auto& r : rs) r.selected.reset();
            const auto pruned = select_global(MetaDataset(std::move(rs)));
            rec.check("removing a non-selected split keeps the global max", pruned.q_s == global.q_s, at);
            break;
        }

        // t quantiles and the HCS variance.
        {
            const int df = std::uniform_int_distribution<int>(1, 200)(rng);
            const double p = std::uniform_real_distribution<double>(0.55, 0.998)(rng);
            rec.check("t_quantile decreasing in df, increasing in p",
                      t_quantile(df, p) > t_quantile(df + 1, p) && t_quantile(df, p) < t_quantile(df, p + 0.001),
                      at);
            const auto w = WeightSet::common_effect(st.se);
            const double a = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
            const double b = a + std::uniform_real_distribution<double>(1e-6, 2.0)(rng);
            const double va = variance_hcs(a, w), vb = variance_hcs(b, w), vm = variance_hcs((a + b) / 2, w);
            rec.check("variance_hcs increasing and affine in tau2",
                      va < vb && std::abs(va + vb - 2 * vm) <= 1e-12 * (va + vb), at);
        }
    }

    return rec.take({"mu_ce study/subgroup agreement", "variance chain when Q < k-1", "DLS.adj >= DLS",
                     "max monotonicity", "zero-set identity", "interval contains point, width = 2 q sqrt(V)",
                     "scale equivariance (exact, power-of-two factors)", "translation equivariance",
                     "global Q_S >= local Q_S", "global Q_S = histogram max", "single candidates: local = global",
                     "removing a non-selected split keeps the global max",
                     "t_quantile decreasing in df, increasing in p", "variance_hcs increasing and affine in tau2"});
}

}  // namespace props
