#include "fewmeta/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <thread>

namespace fewmeta {

namespace {

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T, std::size_t N>
bool in(const T (&values)[N], T v) {
    return std::find(std::begin(values), std::end(values), v) != std::end(values);
}

unsigned worker_count(unsigned jobs, std::size_t work) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(jobs, work)));
}

// Runs body(i) for i in [0, n) on `jobs` threads pulling indices from a
// shared counter. Callers write results into slot i only.
template <class Body>
void parallel_for(std::size_t n, unsigned jobs, Body body) {
    jobs = worker_count(jobs, n);
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1, std::memory_order_relaxed)) < n;) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

constexpr std::size_t kNumTau = std::size(kTauMethods);
constexpr std::size_t kNumCI = std::size(kAllMethods);

struct Replicate {
    std::array<double, kNumTau> tau_hat{};
    std::array<bool, kNumTau> tau_ok{};
    std::array<double, kNumCI> length{};
    std::array<bool, kNumCI> covered{};
    std::array<bool, kNumCI> ci_ok{};
    bool dl_and_dls_zero = false;
    bool chain_applicable = false;
    bool chain_ok = true;
    double mu_gap = 0.0;
};

Replicate run_replicate(const Scenario& s, std::uint64_t tag, std::uint64_t r, double level) {
    Replicate rep;
    auto rng = make_stream(s.seed, tag, r);
    const auto data = generate_tables(s, rng);
    rep.mu_gap = std::abs(mu_ce(data.study.y, WeightSet::common_effect(data.study.se)) - mu_ce_subgroup(data.sub));

    std::optional<HeterogeneitySet> h;
    try {
        h = estimate_all(data.study, data.sub);
    } catch (const std::exception&) {
    }
    if (h) {
        const HeterogeneityEstimate* est[] = {&h->dl, &h->dls, &h->dls_adj, &h->max1, &h->max2};
        for (std::size_t m = 0; m < kNumTau; ++m) {
            rep.tau_hat[m] = std::sqrt(est[m]->tau2);
            rep.tau_ok[m] = true;
        }
        rep.dl_and_dls_zero = h->dl.is_zero && h->dls.is_zero;
    }

    for (std::size_t m = 0; m < kNumCI; ++m) {
        try {
            IntervalResult ci;
            switch (kAllMethods[m]) {
                case CIMethod::Normal: ci = ci_normal(data.study, level); break;
                case CIMethod::HKSJ: ci = ci_hksj(data.study, level); break;
                case CIMethod::MKH: ci = ci_mkh(data.study, level); break;
                case CIMethod::ZH: ci = ci_zh(data.study, level); break;
                case CIMethod::HCS_Max1:
                    if (!h) throw std::runtime_error("no heterogeneity estimates");
                    ci = ci_hcs(data.sub, h->max1, level);
                    break;
                case CIMethod::HCS_Max2:
                    if (!h) throw std::runtime_error("no heterogeneity estimates");
                    ci = ci_hcs(data.sub, h->max2, level);
                    break;
            }
            if (!std::isfinite(ci.lower) || !std::isfinite(ci.upper)) continue;
            rep.length[m] = ci.length();
            rep.covered[m] = ci.contains(s.mu);
            rep.ci_ok[m] = true;
        } catch (const std::exception&) {
        }
    }

    if (h && h->q < static_cast<double>(s.k) - 1.0) {
        try {
            const auto chain = variance_chain(data.study, data.sub);
            rep.chain_applicable = chain.applicable;
            rep.chain_ok = !chain.applicable || chain.holds();
        } catch (const std::exception&) {
            rep.chain_applicable = true;
            rep.chain_ok = false;
        }
    }
    return rep;
}

std::pair<double, double> median_with_se(std::vector<double> v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    const double half = 0.98 * std::sqrt(static_cast<double>(n));
    const double mid = 0.5 * static_cast<double>(n);
    const auto lo = static_cast<std::size_t>(std::clamp(std::floor(mid - half), 0.0, static_cast<double>(n - 1)));
    const auto hi = static_cast<std::size_t>(std::clamp(std::ceil(mid + half), 0.0, static_cast<double>(n - 1)));
    return {med, (v[hi] - v[lo]) / (2.0 * 1.96)};
}

}  // namespace

void Scenario::validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (k < 2) throw ValidationError("scenario needs k >= 2");
    if (!finite(mu) || !finite(delta)) throw ValidationError("scenario mu and Delta must be finite");
    if (!(tau >= 0.0) || !finite(tau)) throw ValidationError("scenario tau must be finite and >= 0");
    if (!(sigma_delta >= 0.0) || !finite(sigma_delta)) {
        throw ValidationError("scenario sigma_Delta must be finite and >= 0");
    }
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("scenario prevalence must lie in (0, 1)");
    if (!(sigma_u > 0.0) || !finite(sigma_u)) throw ValidationError("scenario sigma_u must be positive");
    if (n_reps < 1) throw ValidationError("scenario needs at least one replicate");
    if (!finite(sizes_meanlog)) throw ValidationError("study-size meanlog must be finite");
    if (!(sizes_sdlog >= 0.0) || !finite(sizes_sdlog)) throw ValidationError("study-size sdlog must be >= 0");
}

bool Scenario::on_grid() const noexcept {
    return in(kGridK, k) && in(kGridTau, tau) && in(kGridDelta, delta) && in(kGridSigmaDelta, sigma_delta) &&
           in(kGridPrevalence, p);
}

std::string Scenario::key() const {
    return "k=" + std::to_string(k) + ";mu=" + fmt(mu) + ";tau=" + fmt(tau) + ";delta=" + fmt(delta) +
           ";sigma_delta=" + fmt(sigma_delta) + ";p=" + fmt(p) + ";sigma_u=" + fmt(sigma_u) +
           ";meanlog=" + fmt(sizes_meanlog) + ";sdlog=" + fmt(sizes_sdlog);
}

std::vector<Scenario> scenario_grid(const GridFilter& filter, const Scenario& base) {
    auto pick = [](const auto& wanted, const auto& all) {
        using T = std::decay_t<decltype(all[0])>;
        if (wanted.empty()) return std::vector<T>(std::begin(all), std::end(all));
        return std::vector<T>(wanted.begin(), wanted.end());
    };
    std::vector<Scenario> out;
    for (int k : pick(filter.k, kGridK))
        for (double tau : pick(filter.tau, kGridTau))
            for (double delta : pick(filter.delta, kGridDelta))
                for (double sd : pick(filter.sigma_delta, kGridSigmaDelta))
                    for (double p : pick(filter.p, kGridPrevalence)) {
                        Scenario s = base;
                        s.k = k;
                        s.tau = tau;
                        s.delta = delta;
                        s.sigma_delta = sd;
                        s.p = p;
                        s.validate();
                        out.push_back(s);
                    }
    if (out.empty()) throw ValidationError("scenario filter selects no scenarios");
    return out;
}

std::vector<long long> draw_study_sizes(int k, double meanlog, double sdlog, Rng& rng) {
    if (k < 1) throw ValidationError("need k >= 1 study sizes");
    if (!(sdlog >= 0.0)) throw ValidationError("study-size sdlog must be >= 0");
    std::vector<long long> n(static_cast<std::size_t>(k));
    std::normal_distribution<double> z(0.0, 1.0);
    for (auto& ni : n) {
        const double draw = std::exp(meanlog + sdlog * z(rng));
        const double rounded = 12.0 * std::round(draw / 12.0);
        ni = static_cast<long long>(std::clamp(rounded, 12.0, static_cast<double>(kMaxStudySize)));
    }
    return n;
}

SimulatedTables generate_tables(const Scenario& s, Rng& rng) {
    auto sizes = draw_study_sizes(s.k, s.sizes_meanlog, s.sizes_sdlog, rng);
    return generate_tables(s, sizes, rng);
}

SimulatedTables generate_tables(const Scenario& s, const std::vector<long long>& sizes, Rng& rng) {
    const auto k = sizes.size();
    if (k < 2) throw ValidationError("simulation needs k >= 2");
    SimulatedTables t;
    t.sizes = sizes;
    t.study.y.resize(k);
    t.study.se.resize(k);
    t.sub.y.resize(k);
    t.sub.se.resize(k);
    t.sub.prevalence.resize(k);
    t.theta.resize(k);
    t.theta_sub.resize(k);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) {
        const long long n = sizes[i];
        const long long n1 = std::clamp(std::llround(s.p * static_cast<double>(n)), 1LL, n - 1);
        const long long n2 = n - n1;
        const double p = static_cast<double>(n1) / static_cast<double>(n);

        const double theta = s.mu + s.tau * z(rng);
        const double d = s.delta + s.sigma_delta * z(rng);
        const std::array<double, 2> th{theta - (1.0 - p) * d, theta + p * d};
        const std::array<double, 2> se{s.sigma_u / std::sqrt(static_cast<double>(n1)),
                                       s.sigma_u / std::sqrt(static_cast<double>(n2))};
        const std::array<double, 2> y{th[0] + se[0] * z(rng), th[1] + se[1] * z(rng)};

        double wsum = 0.0;
        double wy = 0.0;
        for (int j = 0; j < 2; ++j) {
            const double w = 1.0 / (se[j] * se[j]);
            wsum += w;
            wy += w * y[j];
        }
        t.study.y[i] = wy / wsum;
        t.study.se[i] = 1.0 / std::sqrt(wsum);
        t.sub.y[i] = y;
        t.sub.se[i] = se;
        t.sub.prevalence[i] = p;
        t.theta[i] = theta;
        t.theta_sub[i] = th;
    }
    return t;
}

MetaDataset to_dataset(const SimulatedTables& t) {
    std::vector<StudyRecord> studies;
    studies.reserve(t.study.k());
    for (std::size_t i = 0; i < t.study.k(); ++i) {
        const auto n = static_cast<int>(t.sizes[i]);
        const int n1 = static_cast<int>(std::llround(t.sub.prevalence[i] * t.sizes[i]));
        StudyRecord r;
        r.estimate = StudyEstimate{"S" + std::to_string(i + 1), t.study.y[i], t.study.se[i], n};
        r.label = r.estimate.study_id;
        SubgroupSplit split;
        split.name = "simulated";
        split.arms[0] = SubgroupArm{1, "arm 1", t.sub.y[i][0], t.sub.se[i][0], n1};
        split.arms[1] = SubgroupArm{2, "arm 2", t.sub.y[i][1], t.sub.se[i][1], n - n1};
        r.splits.push_back(std::move(split));
        r.selected = 0;
        r.derived = true;
        studies.push_back(std::move(r));
    }
    return MetaDataset(std::move(studies));
}

MetaDataset generate_meta_analysis(const Scenario& s, Rng& rng) { return to_dataset(generate_tables(s, rng)); }

const TauMetrics& ScenarioMetrics::tau_of(TauMethod m) const {
    for (const auto& t : tau) {
        if (t.method == m) return t;
    }
    throw std::out_of_range("no metrics for estimator");
}

const CIMetrics& ScenarioMetrics::ci_of(CIMethod m) const {
    for (const auto& c : ci) {
        if (c.method == m) return c;
    }
    throw std::out_of_range("no metrics for interval method");
}

ScenarioMetrics run_scenario(const Scenario& s, unsigned jobs, double level) {
    s.validate();
    const auto tag = fnv1a64(s.key());
    const auto n = static_cast<std::size_t>(s.n_reps);
    std::vector<Replicate> reps(n);
    parallel_for(n, jobs, [&](std::size_t r) { reps[r] = run_replicate(s, tag, r, level); });

    // Reduced sequentially in replicate order so sums do not depend on jobs.
    ScenarioMetrics out;
    out.scenario = s;
    out.replicates = n;
    for (std::size_t m = 0; m < kNumTau; ++m) {
        TauMetrics t;
        t.method = kTauMethods[m];
        double sum = 0.0;
        for (const auto& r : reps) {
            if (!r.tau_ok[m]) {
                ++t.failures;
                continue;
            }
            ++t.evaluated;
            sum += r.tau_hat[m];
            if (r.tau_hat[m] == 0.0) ++t.zero_count;
        }
        if (t.evaluated > 0) {
            const double ne = static_cast<double>(t.evaluated);
            t.mean_tau_hat = sum / ne;
            double ss = 0.0;
            for (const auto& r : reps) {
                if (r.tau_ok[m]) ss += (r.tau_hat[m] - t.mean_tau_hat) * (r.tau_hat[m] - t.mean_tau_hat);
            }
            t.bias = t.mean_tau_hat - s.tau;
            t.bias_mc_se = t.evaluated > 1 ? std::sqrt(ss / (ne - 1.0) / ne) : 0.0;
            t.zero_proportion = static_cast<double>(t.zero_count) / ne;
            t.zero_mc_se = std::sqrt(t.zero_proportion * (1.0 - t.zero_proportion) / ne);
        }
        out.tau.push_back(t);
    }
    for (std::size_t m = 0; m < kNumCI; ++m) {
        CIMetrics c;
        c.method = kAllMethods[m];
        std::vector<double> lengths;
        lengths.reserve(n);
        for (const auto& r : reps) {
            if (!r.ci_ok[m]) {
                ++c.failures;
                continue;
            }
            ++c.evaluated;
            if (r.covered[m]) ++c.covered;
            lengths.push_back(r.length[m]);
        }
        if (c.evaluated > 0) {
            const double ne = static_cast<double>(c.evaluated);
            c.coverage = static_cast<double>(c.covered) / ne;
            c.coverage_mc_se = std::sqrt(c.coverage * (1.0 - c.coverage) / ne);
            std::tie(c.median_length, c.median_length_mc_se) = median_with_se(std::move(lengths));
        }
        out.ci.push_back(c);
    }
    for (const auto& r : reps) {
        if (r.dl_and_dls_zero) ++out.dl_and_dls_zero;
        if (r.chain_applicable) {
            ++out.chain_checked;
            if (!r.chain_ok) ++out.chain_violations;
        }
        out.max_mu_ce_gap = std::max(out.max_mu_ce_gap, r.mu_gap);
    }
    return out;
}

std::vector<ScenarioMetrics> run_scenarios(const std::vector<Scenario>& scenarios, unsigned jobs, double level) {
    for (const auto& s : scenarios) s.validate();
    std::vector<ScenarioMetrics> out(scenarios.size());
    parallel_for(scenarios.size(), jobs, [&](std::size_t i) { out[i] = run_scenario(scenarios[i], 1, level); });
    return out;
}

ExpectationReport validate_expectation(const Scenario& s, int n_reps, std::vector<long long> sizes) {
    s.validate();
    if (n_reps < 2) throw ValidationError("expectation check needs at least 2 replicates");
    const auto tag = fnv1a64(s.key());
    if (sizes.empty()) {
        auto rng = make_stream(s.seed, fnv1a64(s.key() + ";fixed-sizes"), 0);
        sizes = draw_study_sizes(s.k, s.sizes_meanlog, s.sizes_sdlog, rng);
    }
    if (sizes.size() != static_cast<std::size_t>(s.k)) throw ValidationError("need one fixed size per study");
    for (auto n : sizes) {
        if (n < 2) throw ValidationError("fixed study sizes must be at least 2");
    }

    ExpectationReport rep;
    rep.scenario = s;
    rep.sizes = sizes;
    rep.n_reps = n_reps;
    std::vector<double> raw(static_cast<std::size_t>(n_reps));
    SubgroupTable weights;
    for (int r = 0; r < n_reps; ++r) {
        auto rng = make_stream(s.seed, tag, static_cast<std::uint64_t>(r));
        const auto t = generate_tables(s, sizes, rng);
        raw[static_cast<std::size_t>(r)] = tau2_dls(t.sub).tau2_raw;
        if (r == 0) weights = t.sub;
    }
    double sum = 0.0;
    for (double v : raw) sum += v;
    rep.mean_raw = sum / n_reps;
    double ss = 0.0;
    for (double v : raw) ss += (v - rep.mean_raw) * (v - rep.mean_raw);
    rep.mc_se = std::sqrt(ss / (n_reps - 1.0) / n_reps);
    rep.expected = expected_tau2_dls(weights, s.tau, s.delta, s.sigma_delta);
    rep.passed = std::abs(rep.mean_raw - rep.expected) <= 3.0 * rep.mc_se;
    return rep;
}

}  // namespace fewmeta
