// Acceptance runner: one PASS/FAIL line per criterion, detail lines only for
// failing checks. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fewmeta/dataset_io.hpp"
#include "fewmeta/intervals.hpp"
#include "fewmeta/selection.hpp"
#include "fewmeta/simulation.hpp"
#include "property_suite.hpp"

using namespace fewmeta;

namespace {

constexpr double kPointTol = 0.005;  // HR scale
constexpr double kLimitRel = 0.02;
constexpr double kTauTol = 0.005;

struct Criterion {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

struct Row {
    CIMethod method;
    double point, lower, upper;
    std::optional<int> df;  // compared only for t-based rows
    double tau;
};

void compare_rows(Criterion& c, const std::string& block, const MetaDataset& ds, const std::vector<Row>& rows) {
    const auto outcomes = run_all_methods(ds);
    for (const auto& row : rows) {
        const std::string tag = block + " " + std::string(to_string(row.method));
        const MethodOutcome* o = nullptr;
        for (const auto& x : outcomes) {
            if (x.method == row.method) o = &x;
        }
        if (!o || !o->result) {
            c.expect(false, tag + ": no result" + (o ? " (" + o->error + ")" : ""));
            continue;
        }
        const auto& r = *o->result;
        const double point = std::exp(r.point), lower = std::exp(r.lower), upper = std::exp(r.upper);
        const double tau = std::sqrt(r.tau2);
        c.expect(std::abs(point - row.point) <= kPointTol, tag + " point " + fmt(point) + " vs " + fmt(row.point));
        c.expect(std::abs(lower / row.lower - 1) <= kLimitRel, tag + " lower " + fmt(lower) + " vs " + fmt(row.lower));
        c.expect(std::abs(upper / row.upper - 1) <= kLimitRel, tag + " upper " + fmt(upper) + " vs " + fmt(row.upper));
        c.expect(std::abs(tau - row.tau) <= kTauTol, tag + " tau " + fmt(tau) + " vs " + fmt(row.tau));
        if (row.df) {
            c.expect(r.df == row.df, tag + " df " + (r.df ? std::to_string(*r.df) : "none") + " vs " +
                                         std::to_string(*row.df));
        }
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Criterion respire(const std::string& data_dir) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    using M = CIMethod;
    const auto r14 = load_dataset(data_dir + "/respire14.csv");
    const auto g14 = r14.with_selection(select_global(r14).chosen);
    compare_rows(c, "14-day", g14,
                 {{M::Normal, 0.680, 0.420, 1.100, std::nullopt, 0.3},
                  {M::HKSJ, 0.680, 0.030, 15.400, 1, 0.3},
                  {M::MKH, 0.680, 0.030, 15.400, 1, 0.3},
                  {M::ZH, 0.680, 0.008, 56.126, 1, 0.3},
                  {M::HCS_Max1, 0.639, 0.240, 1.703, 3, 0.396},
                  {M::HCS_Max2, 0.639, 0.204, 2.000, 3, 0.470}});
    const auto r28 = load_dataset(data_dir + "/respire28.csv");
    const auto g28 = r28.with_selection(select_global(r28).chosen);
    compare_rows(c, "28-day", g28,
                 {{M::Normal, 0.724, 0.542, 0.967, std::nullopt, 0},
                  {M::HKSJ, 0.724, 0.605, 0.867, 1, 0},
                  {M::MKH, 0.724, 0.111, 4.730, 1, 0},
                  {M::ZH, 0.724, 0.518, 1.012, 1, 0},
                  {M::HCS_Max1, 0.713, 0.106, 4.809, 1, 0},
                  {M::HCS_Max2, 0.713, 0.106, 4.809, 1, 0}});
    const double secs = seconds_since(t0);
    c.expect(secs < 1.0, "runtime " + fmt(secs) + " s");
    return c;
}

Criterion sglt2(const std::string& data_dir) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    using M = CIMethod;
    const auto ds = load_dataset(data_dir + "/sglt2.csv");
    const auto local = ds.with_selection(select_local(ds).chosen);
    const auto global = ds.with_selection(select_global(ds).chosen);
    compare_rows(c, "study-level", global,
                 {{M::Normal, 0.840, 0.763, 0.925, std::nullopt, 0},
                  {M::HKSJ, 0.840, 0.762, 0.925, 5, 0},
                  {M::MKH, 0.840, 0.740, 0.953, 5, 0},
                  {M::ZH, 0.840, 0.764, 0.923, 5, 0}});
    compare_rows(c, "local", local,
                 {{M::HCS_Max1, 0.843, 0.711, 1.000, 11, 0.139}, {M::HCS_Max2, 0.843, 0.707, 1.005, 11, 0.146}});
    compare_rows(c, "global", global,
                 {{M::HCS_Max1, 0.846, 0.714, 1.003, 11, 0.139}, {M::HCS_Max2, 0.846, 0.710, 1.009, 11, 0.146}});
    const double secs = seconds_since(t0);
    c.expect(secs < 5.0, "runtime " + fmt(secs) + " s");
    return c;
}

Criterion qs_enumeration(const std::string& data_dir) {
    Criterion c;
    const auto ds = load_dataset(data_dir + "/sglt2.csv");
    const auto h = qs_histogram(ds);
    c.expect(h.q_s.size() == 4096, "histogram has " + std::to_string(h.q_s.size()) + " values");
    c.expect(h.threshold == 11.0, "threshold " + fmt(h.threshold));
    const auto g = select_global(ds);
    const auto l = select_local(ds);
    c.expect(std::abs(g.q_s - 18.24) <= 0.05, "global Q_S " + fmt(g.q_s));
    c.expect(std::abs(l.q_s - 18.194) <= 0.05, "local Q_S " + fmt(l.q_s));
    double hmax = 0;
    for (double v : h.q_s) hmax = std::max(hmax, v);
    c.expect(hmax == g.q_s, "histogram max " + fmt(hmax) + " differs from the global search");
    return c;
}

Criterion expectation() {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    struct Point {
        double tau, delta, expected;
    };
    for (const auto& pt : {Point{0, 0, 0}, Point{1, 0, 2.0 / 3.0}, Point{0, 1, 1.0 / 3.0}}) {
        Scenario s;
        s.k = 2;
        s.p = 0.5;
        s.tau = pt.tau;
        s.delta = pt.delta;
        s.seed = 42;
        const auto r = validate_expectation(s, 20000, {64, 64});
        const std::string tag = "tau=" + fmt(pt.tau) + " delta=" + fmt(pt.delta);
        c.expect(std::abs(r.expected - pt.expected) <= 1e-12, tag + " analytic " + fmt(r.expected));
        c.expect(r.passed && std::abs(r.mean_raw - pt.expected) <= 3 * r.mc_se,
                 tag + " mean " + fmt(r.mean_raw) + " se " + fmt(r.mc_se));
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 10.0, "runtime " + fmt(secs) + " s");
    return c;
}

Criterion desk_simulation() {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    GridFilter f;
    f.k = {2};
    f.p = {1.0 / 3.0};
    Scenario base;
    base.n_reps = 1000;
    base.seed = 42;
    const auto grid = scenario_grid(f, base);
    c.expect(grid.size() == 125, "grid has " + std::to_string(grid.size()) + " scenarios");
    const auto metrics = run_scenarios(grid, 0);
    for (const auto& m : metrics) {
        const auto& s = m.scenario;
        const std::string tag = "tau=" + fmt(s.tau) + " delta=" + fmt(s.delta) + " sd=" + fmt(s.sigma_delta);
        const double n = static_cast<double>(m.replicates);
        const double se = std::sqrt(0.95 * 0.05 / n);
        const auto& normal = m.ci_of(CIMethod::Normal);
        const auto& mkh = m.ci_of(CIMethod::MKH);
        if (s.tau >= 0.5) {
            c.expect(normal.coverage < 0.95 - 3 * se, "(a) " + tag + " Normal coverage " + fmt(normal.coverage));
        }
        c.expect(mkh.coverage >= 0.95 - se, "(b) " + tag + " mKH coverage " + fmt(mkh.coverage));
        for (auto hm : {CIMethod::HCS_Max1, CIMethod::HCS_Max2}) {
            c.expect(m.ci_of(hm).coverage >= 0.935,
                     "(c) " + tag + " " + std::string(to_string(hm)) + " coverage " + fmt(m.ci_of(hm).coverage));
        }
        if (s.tau == 1.0) {
            const double l2 = m.ci_of(CIMethod::HCS_Max2).median_length;
            c.expect(l2 < mkh.median_length,
                     "(d) " + tag + " HCS_MAX2 median " + fmt(l2) + " vs mKH " + fmt(mkh.median_length));
        }
        c.expect(m.tau_of(TauMethod::MAX1).zero_count <= m.tau_of(TauMethod::DL).zero_count,
                 "(e) " + tag + " MAX1 zeros " + std::to_string(m.tau_of(TauMethod::MAX1).zero_count) + " > DL " +
                     std::to_string(m.tau_of(TauMethod::DL).zero_count));
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 300.0, "runtime " + fmt(secs) + " s");
    return c;
}

Criterion properties() {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& r : props::run_property_suite(10000, 20240601)) {
        c.expect(r.passed(), r.name + ": " + std::to_string(r.failures) + "/" + std::to_string(r.checked) +
                                 " failed, first at " + r.first_failure);
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string data_dir = argc > 1 ? argv[1] : FEWMETA_DATA_DIR;
    const std::vector<std::pair<std::string, std::function<Criterion()>>> criteria{
        {"1 RESPIRE 14/28-day reproduction", [&] { return respire(data_dir); }},
        {"2 SGLT2 reproduction, local and global", [&] { return sglt2(data_dir); }},
        {"3 SGLT2 Q_S enumeration, 4096 combinations", [&] { return qs_enumeration(data_dir); }},
        {"4 Expectation oracle for raw tau2_DLS", expectation},
        {"5 Desk-scale simulation, 125 scenarios", desk_simulation},
        {"6 Structural properties on 10000 random instances", properties},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Criterion c;
        try {
            c = fn();
        } catch (const std::exception& e) {
            c.failures.push_back(std::string("exception: ") + e.what());
        }
        std::cout << (c.failures.empty() ? "PASS" : "FAIL") << "  criterion " << name << '\n';
        for (const auto& f : c.failures) std::cout << "      " << f << '\n';
        failed += !c.failures.empty();
        std::cout.flush();
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << '\n';
    return failed ? 1 : 0;
}
