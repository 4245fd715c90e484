#include "fewmeta/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <unistd.h>

#include "fewmeta/dataset_io.hpp"
#include "fewmeta/distributions.hpp"
#include "fewmeta/report.hpp"

namespace fewmeta::cli {

using nlohmann::json;

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ValidationError("cannot write " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os) {
            std::filesystem::remove(tmp);
            throw ValidationError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ValidationError("cannot replace " + path.string() + ": " + ec.message());
    }
}

namespace {

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ValidationError("not a number: " + std::string(text));
    return v;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

double parse_fraction(std::string_view text) {
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return parse_double(text);
    const double num = parse_double(text.substr(0, slash));
    const double den = parse_double(text.substr(slash + 1));
    if (den == 0.0) throw ValidationError("zero denominator in " + std::string(text));
    return num / den;
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::string metrics_csv(const std::vector<ScenarioMetrics>& metrics) {
    std::ostringstream os;
    os << "scenario,k,mu,tau,delta,sigma_delta,p,reps,seed,method,metric,value\n";
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const auto& m = metrics[i];
        const auto& s = m.scenario;
        const std::string prefix = std::to_string(i) + "," + std::to_string(s.k) + "," + format_number(s.mu) + "," +
                                   format_number(s.tau) + "," + format_number(s.delta) + "," +
                                   format_number(s.sigma_delta) + "," + format_number(s.p) + "," +
                                   std::to_string(s.n_reps) + "," + std::to_string(s.seed) + ",";
        auto row = [&](std::string_view method, std::string_view metric, const std::string& value) {
            os << prefix << method << ',' << metric << ',' << value << '\n';
        };
        for (const auto& t : m.tau) {
            const std::string name(to_string(t.method));
            row(name, "mean_tau_hat", format_number(t.mean_tau_hat));
            row(name, "bias", format_number(t.bias));
            row(name, "bias_mc_se", format_number(t.bias_mc_se));
            row(name, "zero_count", std::to_string(t.zero_count));
            row(name, "zero_proportion", format_number(t.zero_proportion));
            row(name, "zero_mc_se", format_number(t.zero_mc_se));
            row(name, "failures", std::to_string(t.failures));
        }
        for (const auto& c : m.ci) {
            const std::string name(to_string(c.method));
            row(name, "coverage", format_number(c.coverage));
            row(name, "coverage_mc_se", format_number(c.coverage_mc_se));
            row(name, "median_length", format_number(c.median_length));
            row(name, "median_length_mc_se", format_number(c.median_length_mc_se));
            row(name, "failures", std::to_string(c.failures));
        }
        row("ALL", "replicates", std::to_string(m.replicates));
        row("ALL", "dl_and_dls_zero", std::to_string(m.dl_and_dls_zero));
        row("ALL", "chain_checked", std::to_string(m.chain_checked));
        row("ALL", "chain_violations", std::to_string(m.chain_violations));
        row("ALL", "max_mu_ce_gap", format_number(m.max_mu_ce_gap));
    }
    return os.str();
}

json metrics_json(const std::vector<ScenarioMetrics>& metrics) {
    json scenarios = json::array();
    for (const auto& m : metrics) {
        const auto& s = m.scenario;
        json tau = json::object();
        for (const auto& t : m.tau) {
            tau[std::string(to_string(t.method))] = {{"evaluated", t.evaluated},
                                                     {"failures", t.failures},
                                                     {"mean_tau_hat", t.mean_tau_hat},
                                                     {"bias", t.bias},
                                                     {"bias_mc_se", t.bias_mc_se},
                                                     {"zero_count", t.zero_count},
                                                     {"zero_proportion", t.zero_proportion},
                                                     {"zero_mc_se", t.zero_mc_se}};
        }
        json ci = json::object();
        for (const auto& c : m.ci) {
            ci[std::string(to_string(c.method))] = {{"evaluated", c.evaluated},
                                                    {"failures", c.failures},
                                                    {"covered", c.covered},
                                                    {"coverage", c.coverage},
                                                    {"coverage_mc_se", c.coverage_mc_se},
                                                    {"median_length", c.median_length},
                                                    {"median_length_mc_se", c.median_length_mc_se}};
        }
        scenarios.push_back({{"scenario",
                              {{"k", s.k},
                               {"mu", s.mu},
                               {"tau", s.tau},
                               {"delta", s.delta},
                               {"sigma_delta", s.sigma_delta},
                               {"p", s.p},
                               {"sigma_u", s.sigma_u},
                               {"n_reps", s.n_reps},
                               {"seed", s.seed},
                               {"sizes_meanlog", s.sizes_meanlog},
                               {"sizes_sdlog", s.sizes_sdlog}}},
                             {"replicates", m.replicates},
                             {"tau", tau},
                             {"ci", ci},
                             {"dl_and_dls_zero", m.dl_and_dls_zero},
                             {"chain_checked", m.chain_checked},
                             {"chain_violations", m.chain_violations},
                             {"max_mu_ce_gap", m.max_mu_ce_gap}});
    }
    return {{"schema_version", 1}, {"scenarios", scenarios}};
}

std::vector<CheckResult> run_self_checks(int expectation_reps, int chain_datasets) {
    std::vector<CheckResult> out;
    auto add = [&](std::string name, bool ok, std::string detail) {
        out.push_back({std::move(name), ok, std::move(detail)});
    };

    {
        const double t = t_quantile(1, 0.975);
        add("t_quantile(1, 0.975) = 12.706 +- 1e-3", std::abs(t - 12.706) <= 1e-3, "got " + format_number(t));
        const double big = t_quantile(1000000, 0.975);
        add("t_quantile(1e6, 0.975) = 1.960 +- 2e-3", std::abs(big - 1.96) <= 2e-3, "got " + format_number(big));
        double worst = 0.0;
        for (double p : {0.6, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999}) {
            const double cauchy = std::tan(std::numbers::pi * (p - 0.5));
            const double two = (2.0 * p - 1.0) / std::sqrt(2.0 * p * (1.0 - p));
            worst = std::max({worst, std::abs(t_quantile(1, p) - cauchy), std::abs(t_quantile(2, p) - two)});
        }
        add("t_quantile closed forms at df 1 and 2 within 1e-10", worst <= 1e-10,
            "max abs error " + format_number(worst));
    }

    struct Point {
        const char* name;
        double tau, delta;
    };
    for (const auto& pt : {Point{"expectation oracle tau=0 Delta=0", 0.0, 0.0},
                           Point{"expectation oracle tau=1 (2/3)", 1.0, 0.0},
                           Point{"expectation oracle Delta=1 (1/3)", 0.0, 1.0}}) {
        Scenario s;
        s.k = 2;
        s.p = 0.5;
        s.tau = pt.tau;
        s.delta = pt.delta;
        s.seed = 20240229;
        const auto r = validate_expectation(s, expectation_reps, {64, 64});
        add(pt.name, r.passed,
            "mean " + format_number(r.mean_raw) + " expected " + format_number(r.expected) + " mc_se " +
                format_number(r.mc_se));
    }

    {
        std::uint64_t applicable = 0;
        std::uint64_t violations = 0;
        double gap = 0.0;
        for (int d = 0; d < chain_datasets; ++d) {
            auto rng = make_stream(7, fnv1a64("variance-chain-sweep"), static_cast<std::uint64_t>(d));
            Scenario s;
            s.k = kGridK[rng() % std::size(kGridK)];
            s.tau = kGridTau[rng() % std::size(kGridTau)];
            s.delta = kGridDelta[rng() % std::size(kGridDelta)];
            s.sigma_delta = kGridSigmaDelta[rng() % std::size(kGridSigmaDelta)];
            s.p = kGridPrevalence[rng() % std::size(kGridPrevalence)];
            const auto t = generate_tables(s, rng);
            const auto chain = variance_chain(t.study, t.sub);
            if (chain.applicable) {
                ++applicable;
                if (!chain.holds()) ++violations;
            }
            gap = std::max(gap, std::abs(mu_ce(t.study.y, WeightSet::common_effect(t.study.se)) -
                                         mu_ce_subgroup(t.sub)));
        }
        add("variance chain when Q < k-1", applicable > 0 && violations == 0,
            std::to_string(violations) + " violations in " + std::to_string(applicable) + " applicable of " +
                std::to_string(chain_datasets) + " datasets");
        add("study/subgroup mu_CE agree to 1e-12", gap <= 1e-12, "max gap " + format_number(gap));
    }
    return out;
}

namespace {

json error_object(std::string_view type, const std::string& message) {
    return {{"error", {{"type", type}, {"message", message}}}};
}

void emit(const std::string& target, const std::string& content, std::ostream& out) {
    if (target == "-") {
        out << content;
    } else {
        write_file_atomic(target, content);
    }
}

std::string domain_text() {
    std::ostringstream os;
    auto list = [&](const char* name, const auto& values) {
        os << "  " << name << ":";
        for (auto v : values) os << ' ' << format_number(static_cast<double>(v));
        os << '\n';
    };
    list("k", kGridK);
    list("tau", kGridTau);
    list("delta", kGridDelta);
    list("sigma-delta", kGridSigmaDelta);
    os << "  prev: 1/2 1/3 1/4\n  mu: 0\n";
    return os.str();
}

struct AnalyzeArgs {
    std::string data;
    std::string select = "global";
    double level = 0.95;
    bool exp = false;
    int zh_c = 2;
    std::uint64_t max_combos = kDefaultMaxCombinations;
    unsigned jobs = 1;
    std::string json_out;
    bool derive = false;
    std::vector<std::string> methods;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    LoadOptions lo;
    lo.derive_missing_study_rows = a.derive;
    const auto ds = load_dataset(a.data, lo);
    ReportOptions opts;
    const auto mode = selection_mode_from_string(a.select);
    if (!mode) throw ValidationError("unknown --select value " + a.select);
    opts.selection = *mode;
    opts.analysis.level = a.level;
    opts.analysis.zh_penalty_C = a.zh_c;
    if (!a.methods.empty()) {
        opts.analysis.methods.clear();
        for (const auto& m : a.methods) {
            const auto cm = ci_method_from_string(m);
            if (!cm) throw ValidationError("unknown interval method " + m);
            opts.analysis.methods.push_back(*cm);
        }
    }
    if (!(a.level > 0.0 && a.level < 1.0)) throw ValidationError("--level must lie in (0, 1)");
    opts.max_combinations = a.max_combos;
    opts.jobs = a.jobs;
    opts.exponentiate = a.exp;
    const auto report = build_report(ds, opts, a.data);
    if (!a.json_out.empty()) emit(a.json_out, report_to_json(report).dump(2) + "\n", out);
    if (a.json_out != "-") out << render_table(report);
    return kOk;
}

struct SelectArgs {
    std::string data;
    std::string strategy = "global";
    std::string histogram;
    std::uint64_t max_combos = kDefaultMaxCombinations;
    unsigned jobs = 1;
    std::string json_out;
    bool derive = false;
};

int cmd_select(const SelectArgs& a, std::ostream& out) {
    LoadOptions lo;
    lo.derive_missing_study_rows = a.derive;
    const auto ds = load_dataset(a.data, lo);
    const auto strategy = selection_strategy_from_string(a.strategy);
    if (!strategy) throw ValidationError("unknown --strategy value " + a.strategy);
    const auto r = select(ds, *strategy, a.max_combos, a.jobs);

    json j = {{"schema_version", 1},
              {"source", a.data},
              {"strategy", std::string(to_string(r.strategy))},
              {"q_s", r.q_s},
              {"combinations_evaluated", r.combinations_evaluated},
              {"threshold", 2.0 * static_cast<double>(ds.size()) - 1.0}};
    json chosen = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        chosen.push_back({{"study_id", ds[i].estimate.study_id}, {"split", ds[i].splits[r.chosen[i]].name}});
    }
    j["chosen"] = chosen;

    std::optional<QsHistogram> hist;
    if (!a.histogram.empty()) {
        hist = qs_histogram(ds, a.max_combos, a.jobs);
        std::ostringstream os;
        os << "combination,q_s\n";
        for (std::size_t id = 0; id < hist->q_s.size(); ++id) os << id << ',' << format_number(hist->q_s[id]) << '\n';
        emit(a.histogram, os.str(), out);
        double max = hist->q_s.front();
        std::size_t above = 0;
        for (double q : hist->q_s) {
            max = std::max(max, q);
            if (q > hist->threshold) ++above;
        }
        j["histogram"] = {{"combinations", hist->q_s.size()}, {"max", max}, {"above_threshold", above}};
    }

    if (!a.json_out.empty()) emit(a.json_out, j.dump(2) + "\n", out);
    if (a.json_out == "-" || a.histogram == "-") return kOk;
    out << "Strategy: " << to_string(r.strategy) << "\nQ_S = " << format_number(r.q_s) << " ("
        << r.combinations_evaluated << " combination" << (r.combinations_evaluated == 1 ? "" : "s")
        << " evaluated)\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << "  " << ds[i].estimate.study_id << ": " << ds[i].splits[r.chosen[i]].name << '\n';
    }
    out << "tau_DLS > 0 iff Q_S > " << 2 * ds.size() - 1 << '\n';
    if (hist) {
        out << "Histogram: " << hist->q_s.size() << " combinations, max Q_S = " << format_number(j["histogram"]["max"].get<double>())
            << ", " << j["histogram"]["above_threshold"].get<std::size_t>() << " above threshold\n";
    }
    return kOk;
}

struct SimulateArgs {
    std::vector<std::string> k, tau, delta, sigma_delta, prev;
    int reps = 1000;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 0;
    double meanlog = 5.0;
    double sdlog = 1.0;
    double sigma_u = 4.0;
    double mu = 0.0;
    double level = 0.95;
    bool off_grid = false;
    std::string out_csv;
    std::string summary;
};

template <class T, std::size_t N>
bool on_list(const T (&values)[N], double v) {
    for (auto x : values) {
        if (static_cast<double>(x) == v) return true;
    }
    return false;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    GridFilter f;
    std::vector<std::string> off;
    for (const auto& v : a.k) {
        const double d = parse_double(v);
        if (d != std::floor(d) || d < 2) throw ValidationError("--k must be an integer >= 2, got " + v);
        if (!on_list(kGridK, d)) off.push_back("k=" + v);
        f.k.push_back(static_cast<int>(d));
    }
    auto reals = [&](const std::vector<std::string>& in, std::vector<double>& dst, const auto& grid, const char* name,
                     bool fraction) {
        for (const auto& v : in) {
            const double d = fraction ? parse_fraction(v) : parse_double(v);
            if (!on_list(grid, d)) off.push_back(std::string(name) + "=" + v);
            dst.push_back(d);
        }
    };
    reals(a.tau, f.tau, kGridTau, "tau", false);
    reals(a.delta, f.delta, kGridDelta, "delta", false);
    reals(a.sigma_delta, f.sigma_delta, kGridSigmaDelta, "sigma-delta", false);
    reals(a.prev, f.p, kGridPrevalence, "prev", true);
    if (a.mu != 0.0) off.push_back("mu=" + format_number(a.mu));
    if (!off.empty() && !a.off_grid) {
        std::string msg = "values outside the simulation grid:";
        for (const auto& o : off) msg += " " + o;
        msg += "\nallowed values (pass --off-grid to override):\n" + domain_text();
        throw ValidationError(msg);
    }

    Scenario base;
    base.mu = a.mu;
    base.n_reps = a.reps;
    base.sigma_u = a.sigma_u;
    base.sizes_meanlog = a.meanlog;
    base.sizes_sdlog = a.sdlog;
    if (a.seed) {
        base.seed = *a.seed;
    } else if (const char* env = std::getenv("FEWMETA_SEED"); env && *env) {
        std::uint64_t s = 0;
        const auto* end = env + std::strlen(env);
        auto res = std::from_chars(env, end, s);
        if (res.ec != std::errc() || res.ptr != end) throw ValidationError("FEWMETA_SEED is not an unsigned integer");
        base.seed = s;
    } else {
        err << "note: no --seed or FEWMETA_SEED given; using seed 0\n";
    }

    const auto scenarios = scenario_grid(f, base);
    const auto metrics = run_scenarios(scenarios, a.jobs, a.level);
    const auto csv = metrics_csv(metrics);
    if (a.out_csv.empty() || a.out_csv == "-") {
        out << csv;
    } else {
        write_file_atomic(a.out_csv, csv);
        out << "wrote " << scenarios.size() << " scenarios x " << a.reps << " replicates to " << a.out_csv << '\n';
    }
    if (!a.summary.empty()) emit(a.summary, metrics_json(metrics).dump(2) + "\n", out);
    return kOk;
}

int cmd_validate(int reps, int chain, const std::string& json_out, std::ostream& out) {
    const auto checks = run_self_checks(reps, chain);
    bool all = true;
    json j = json::array();
    for (const auto& c : checks) {
        all = all && c.passed;
        j.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    if (!json_out.empty()) emit(json_out, json({{"passed", all}, {"checks", j}}).dump(2) + "\n", out);
    if (json_out != "-") {
        for (const auto& c : checks) out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        out << (all ? "all checks passed\n" : "some checks FAILED\n");
    }
    return all ? kOk : kCheckFailure;
}

// Turns config entries into --key value tokens for keys not given on the
// command line, so explicit flags win.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path) return args;
    auto given = [&](const std::string& key) {
        for (const auto& a : args) {
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        }
        return false;
    };
    std::vector<std::string> merged(args.begin(), args.begin() + 2);
    for (const auto& [key, value] : read_config(*path)) {
        if (key == "config" || given(key)) continue;
        if (key == "off-grid") {
            if (value == "true" || value == "1") merged.push_back("--off-grid");
            continue;
        }
        merged.push_back("--" + key);
        merged.push_back(value);
    }
    merged.insert(merged.end(), args.begin() + 2, args.end());
    return merged;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Subgroup-informed random-effects meta-analysis for few studies", "fewmeta"};
    app.require_subcommand(1);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Heterogeneity estimates and confidence intervals for a dataset");
    analyze->add_option("data", an.data, "Dataset (.csv or .json)")->required();
    analyze->add_option("--select", an.select, "Split selection: global, local, pvalue, given or none")
        ->capture_default_str();
    analyze->add_option("--level", an.level, "Confidence level")->capture_default_str();
    analyze->add_flag("--exp", an.exp, "Present exponentiated estimates (hazard/odds ratios)");
    analyze->add_option("--zh-c", an.zh_c, "ZH leverage penalty exponent")->capture_default_str();
    analyze->add_option("--max-combos", an.max_combos, "Global search budget")->capture_default_str();
    analyze->add_option("--jobs", an.jobs, "Worker threads for the global search (0 = all cores)");
    analyze->add_option("--json", an.json_out, "Write the JSON report here ('-' for stdout)");
    analyze->add_option("--methods", an.methods, "Interval methods to run")->delimiter(',');
    analyze->add_flag("--derive-study-rows", an.derive, "Build missing study rows from the first split");

    SelectArgs se;
    auto* sel = app.add_subcommand("select", "Choose one subgroup split per study");
    sel->add_option("data", se.data, "Dataset (.csv or .json)")->required();
    sel->add_option("--strategy", se.strategy, "local, global or pvalue")->capture_default_str();
    sel->add_option("--histogram", se.histogram, "Write every combination's Q_S as CSV ('-' for stdout)");
    sel->add_option("--max-combos", se.max_combos, "Global search budget")->capture_default_str();
    sel->add_option("--jobs", se.jobs, "Worker threads (0 = all cores)");
    sel->add_option("--json", se.json_out, "Write the result as JSON ('-' for stdout)");
    sel->add_flag("--derive-study-rows", se.derive, "Build missing study rows from the first split");

    SimulateArgs si;
    std::string config_path;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo evaluation over the scenario grid");
    sim->add_option("--config", config_path, "Flat key=value file; keys are long option names");
    sim->add_option("--k", si.k, "Numbers of studies")->delimiter(',');
    sim->add_option("--tau", si.tau, "Between-study SDs")->delimiter(',');
    sim->add_option("--delta", si.delta, "Mean subgroup interactions")->delimiter(',');
    sim->add_option("--sigma-delta", si.sigma_delta, "Interaction SDs")->delimiter(',');
    sim->add_option("--prev", si.prev, "Subgroup prevalences, e.g. 1/3")->delimiter(',');
    sim->add_option("--reps", si.reps, "Replicates per scenario")->capture_default_str();
    sim->add_option("--seed", si.seed, "Seed (falls back to FEWMETA_SEED)");
    sim->add_option("--jobs", si.jobs, "Worker threads (0 = all cores)")->capture_default_str();
    sim->add_option("--sizes-meanlog", si.meanlog, "Log-scale mean of study sizes")->capture_default_str();
    sim->add_option("--sizes-sdlog", si.sdlog, "Log-scale SD of study sizes")->capture_default_str();
    sim->add_option("--sigma-u", si.sigma_u, "Unit-information SD")->capture_default_str();
    sim->add_option("--mu", si.mu, "True overall effect")->capture_default_str();
    sim->add_option("--level", si.level, "Confidence level")->capture_default_str();
    sim->add_flag("--off-grid", si.off_grid, "Allow values outside the standard grid");
    sim->add_option("--out", si.out_csv, "Metrics CSV (default stdout)");
    sim->add_option("--summary", si.summary, "JSON summary with Monte Carlo SEs");

    int val_reps = 20000;
    int val_chain = 5000;
    std::string val_json;
    auto* val = app.add_subcommand("validate", "Self-checks: t quantiles, expectation oracle, variance chain");
    val->add_option("--reps", val_reps, "Replicates per expectation check")->capture_default_str();
    val->add_option("--chain-datasets", val_chain, "Synthetic datasets in the chain sweep")->capture_default_str();
    val->add_option("--json", val_json, "Write results as JSON ('-' for stdout)");

    try {
        auto args = raw_args;
        if (args.size() >= 2 && args[1] == "simulate") args = merge_config(args);
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kOk : kValidationError;
        }

        if (analyze->parsed()) return cmd_analyze(an, out);
        if (sel->parsed()) return cmd_select(se, out);
        if (sim->parsed()) return cmd_simulate(si, out, err);
        if (val->parsed()) return cmd_validate(val_reps, val_chain, val_json, out);
        return kValidationError;
    } catch (const BudgetExceeded& e) {
        auto j = error_object("budget_exceeded", e.what());
        j["error"]["required"] = e.required();
        j["error"]["budget"] = e.budget();
        err << j.dump() << '\n';
        return kBudgetExceeded;
    } catch (const ValidationError& e) {
        err << error_object("validation", e.what()).dump() << '\n';
        return kValidationError;
    } catch (const std::exception& e) {
        err << error_object("internal", e.what()).dump() << '\n';
        return kCheckFailure;
    }
}

}  // namespace fewmeta::cli
