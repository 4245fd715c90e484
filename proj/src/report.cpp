#include "fewmeta/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace fewmeta {

using nlohmann::json;

std::string_view to_string(SelectionMode m) {
    switch (m) {
        case SelectionMode::None: return "none";
        case SelectionMode::Given: return "given";
        case SelectionMode::Local: return "local";
        case SelectionMode::Global: return "global";
        case SelectionMode::PValue: return "pvalue";
    }
    return "?";
}

std::optional<SelectionMode> selection_mode_from_string(std::string_view s) {
    for (auto m : {SelectionMode::None, SelectionMode::Given, SelectionMode::Local, SelectionMode::Global,
                   SelectionMode::PValue}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

double round_half_up(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::floor(v * scale + 0.5 + 1e-9) / scale;
}

namespace {

std::optional<SelectionStrategy> strategy_of(SelectionMode m) {
    switch (m) {
        case SelectionMode::Local: return SelectionStrategy::Local;
        case SelectionMode::Global: return SelectionStrategy::Global;
        case SelectionMode::PValue: return SelectionStrategy::PValue;
        default: return std::nullopt;
    }
}

bool every_study_has_splits(const MetaDataset& ds) {
    for (const auto& s : ds.studies()) {
        if (s.splits.empty()) return false;
    }
    return true;
}

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

std::optional<TauMethod> tau_method_from_string(std::string_view s) {
    for (auto m : {TauMethod::DL, TauMethod::DLS, TauMethod::DLS_ADJ, TauMethod::MAX1, TauMethod::MAX2}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

json interval_json(const MethodOutcome& o, bool exponentiate) {
    json j = {{"method", std::string(to_string(o.method))}, {"ok", o.result.has_value()}};
    if (!o.result) {
        j["error"] = o.error;
        return j;
    }
    const auto& r = *o.result;
    j["point"] = r.point;
    j["variance"] = r.variance;
    j["df"] = opt(r.df);
    j["quantile"] = r.quantile;
    j["lower"] = r.lower;
    j["upper"] = r.upper;
    j["level"] = r.level;
    j["tau2"] = r.tau2;
    j["fallback"] = r.fallback;
    j["exponentiated"] = {{"point", std::exp(r.point)}, {"lower", std::exp(r.lower)}, {"upper", std::exp(r.upper)}};
    auto shown = [&](double v) { return round_half_up(exponentiate ? std::exp(v) : v); };
    j["display"] = {{"point", shown(r.point)}, {"lower", shown(r.lower)}, {"upper", shown(r.upper)}};
    return j;
}

MethodOutcome interval_from_json(const json& j) {
    MethodOutcome o;
    const auto name = j.at("method").get<std::string>();
    const auto m = ci_method_from_string(name);
    if (!m) throw ValidationError("unknown interval method " + name);
    o.method = *m;
    if (!j.at("ok").get<bool>()) {
        o.error = j.at("error").get<std::string>();
        return o;
    }
    IntervalResult r;
    r.method = *m;
    r.point = j.at("point").get<double>();
    r.variance = j.at("variance").get<double>();
    r.df = get_opt<int>(j, "df");
    r.quantile = j.at("quantile").get<double>();
    r.lower = j.at("lower").get<double>();
    r.upper = j.at("upper").get<double>();
    r.level = j.at("level").get<double>();
    r.tau2 = j.at("tau2").get<double>();
    r.fallback = j.at("fallback").get<bool>();
    o.result = r;
    return o;
}

std::string fixed(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(v, decimals));
    return buf;
}

}  // namespace

AnalysisReport build_report(const MetaDataset& ds, const ReportOptions& options, std::string source) {
    require_analyzable(ds);
    AnalysisReport r;
    r.source = std::move(source);
    r.selection_mode = options.selection;
    r.level = options.analysis.level;
    r.zh_penalty_C = options.analysis.zh_penalty_C;
    r.exponentiate = options.exponentiate;

    MetaDataset work = ds;
    if (options.selection == SelectionMode::None) {
        work = ds.without_selection();
    } else if (auto strategy = strategy_of(options.selection)) {
        // Selection needs a candidate in every study; otherwise the subgroup
        // methods report why they could not run.
        if (every_study_has_splits(ds)) {
            r.selection = select(ds, *strategy, options.max_combinations, options.jobs);
            work = ds.with_selection(r.selection->chosen);
        } else {
            work = ds.without_selection();
        }
    }

    for (const auto& s : work.studies()) {
        StudySummary sum{s.estimate.study_id, s.label, s.splits.size(), std::nullopt, s.derived};
        if (s.selected) sum.selected = s.splits[*s.selected].name;
        r.studies.push_back(std::move(sum));
    }

    const auto study = study_table(work);
    r.q = cochran_q(study.y, study.se);
    r.heterogeneity.push_back(tau2_dl(study));
    if (work.any_selected()) {
        try {
            const auto h = estimate_all(study, subgroup_table(work));
            r.heterogeneity.insert(r.heterogeneity.end(), {h.dls, h.dls_adj, h.max1, h.max2});
            r.q_s = h.q_s;
            r.shrinkage = h.shrinkage;
        } catch (const std::exception& e) {
            for (auto m : {TauMethod::DLS, TauMethod::DLS_ADJ, TauMethod::MAX1, TauMethod::MAX2}) {
                r.heterogeneity_errors.push_back({std::string(to_string(m)), e.what()});
            }
        }
    } else {
        for (auto m : {TauMethod::DLS, TauMethod::DLS_ADJ, TauMethod::MAX1, TauMethod::MAX2}) {
            r.heterogeneity_errors.push_back({std::string(to_string(m)), "no selected subgroup split"});
        }
    }

    r.intervals = run_all_methods(work, options.analysis);
    r.consistency_gaps = work.consistency_gaps();
    return r;
}

json report_to_json(const AnalysisReport& r) {
    json studies = json::array();
    for (const auto& s : r.studies) {
        studies.push_back({{"study_id", s.study_id},
                           {"label", s.label},
                           {"splits", s.splits},
                           {"selected", opt(s.selected)},
                           {"derived", s.derived}});
    }

    json selection = nullptr;
    if (r.selection) {
        selection = {{"strategy", std::string(to_string(r.selection->strategy))},
                     {"q_s", r.selection->q_s},
                     {"combinations_evaluated", r.selection->combinations_evaluated},
                     {"chosen", r.selection->chosen}};
    }

    json estimates = json::array();
    for (const auto& h : r.heterogeneity) {
        estimates.push_back({{"method", std::string(to_string(h.method))},
                             {"tau2", h.tau2},
                             {"tau", std::sqrt(h.tau2)},
                             {"tau2_raw", h.tau2_raw},
                             {"is_zero", h.is_zero},
                             {"winner", h.winner == EstimateSide::Subgroup ? "subgroup" : "study"}});
    }
    json errors = json::array();
    for (const auto& e : r.heterogeneity_errors) errors.push_back({{"method", e.method}, {"error", e.error}});

    json intervals = json::array();
    for (const auto& o : r.intervals) intervals.push_back(interval_json(o, r.exponentiate));

    json gaps = json::array();
    for (const auto& g : r.consistency_gaps) {
        gaps.push_back({{"study_id", g.study_id},
                        {"split", g.split},
                        {"y_gap", g.y_gap},
                        {"se_ratio", g.se_ratio},
                        {"warning", g.warning}});
    }
    json fallbacks = json::array();
    for (const auto& o : r.intervals) {
        if (o.result && o.result->fallback) fallbacks.push_back(std::string(to_string(o.method)));
    }

    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["source"] = r.source;
    j["dataset"] = {{"k", r.k()}, {"studies", studies}};
    j["settings"] = {{"selection", std::string(to_string(r.selection_mode))},
                     {"level", r.level},
                     {"zh_penalty_C", r.zh_penalty_C},
                     {"presentation", r.exponentiate ? "exp" : "linear"}};
    j["selection"] = selection;
    j["heterogeneity"] = {{"q", r.q},
                          {"q_s", opt(r.q_s)},
                          {"A", r.shrinkage ? json(r.shrinkage->A) : json(nullptr)},
                          {"B_coefficient", r.shrinkage ? json(r.shrinkage->B_coefficient) : json(nullptr)},
                          {"estimates", estimates},
                          {"errors", errors}};
    j["intervals"] = intervals;
    j["diagnostics"] = {{"consistency_gaps", gaps}, {"fallback_methods", fallbacks}};
    return j;
}

AnalysisReport report_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
            throw ValidationError("unsupported report schema_version");
        }
        AnalysisReport r;
        r.source = j.at("source").get<std::string>();
        for (const auto& s : j.at("dataset").at("studies")) {
            r.studies.push_back(StudySummary{s.at("study_id").get<std::string>(), s.at("label").get<std::string>(),
                                             s.at("splits").get<std::size_t>(), get_opt<std::string>(s, "selected"),
                                             s.at("derived").get<bool>()});
        }
        const auto& settings = j.at("settings");
        const auto mode = selection_mode_from_string(settings.at("selection").get<std::string>());
        if (!mode) throw ValidationError("unknown selection mode in report");
        r.selection_mode = *mode;
        r.level = settings.at("level").get<double>();
        r.zh_penalty_C = settings.at("zh_penalty_C").get<int>();
        r.exponentiate = settings.at("presentation").get<std::string>() == "exp";

        if (const auto& js = j.at("selection"); !js.is_null()) {
            SelectionResult s;
            const auto strategy = selection_strategy_from_string(js.at("strategy").get<std::string>());
            if (!strategy) throw ValidationError("unknown selection strategy in report");
            s.strategy = *strategy;
            s.q_s = js.at("q_s").get<double>();
            s.combinations_evaluated = js.at("combinations_evaluated").get<std::uint64_t>();
            s.chosen = js.at("chosen").get<std::vector<std::size_t>>();
            r.selection = s;
        }

        const auto& jh = j.at("heterogeneity");
        r.q = jh.at("q").get<double>();
        r.q_s = get_opt<double>(jh, "q_s");
        if (!jh.at("A").is_null()) {
            r.shrinkage = ShrinkageTerms{jh.at("A").get<double>(), jh.at("B_coefficient").get<double>()};
        }
        for (const auto& e : jh.at("estimates")) {
            const auto name = e.at("method").get<std::string>();
            const auto m = tau_method_from_string(name);
            if (!m) throw ValidationError("unknown heterogeneity estimator " + name);
            HeterogeneityEstimate h;
            h.method = *m;
            h.tau2 = e.at("tau2").get<double>();
            h.tau2_raw = e.at("tau2_raw").get<double>();
            h.is_zero = e.at("is_zero").get<bool>();
            h.winner = e.at("winner").get<std::string>() == "subgroup" ? EstimateSide::Subgroup : EstimateSide::Study;
            r.heterogeneity.push_back(h);
        }
        for (const auto& e : jh.at("errors")) {
            r.heterogeneity_errors.push_back({e.at("method").get<std::string>(), e.at("error").get<std::string>()});
        }
        for (const auto& ji : j.at("intervals")) r.intervals.push_back(interval_from_json(ji));
        for (const auto& g : j.at("diagnostics").at("consistency_gaps")) {
            ConsistencyGap gap;
            gap.study_id = g.at("study_id").get<std::string>();
            gap.split = g.at("split").get<std::string>();
            gap.y_gap = g.at("y_gap").get<double>();
            gap.se_ratio = g.at("se_ratio").get<double>();
            gap.warning = g.at("warning").get<bool>();
            r.consistency_gaps.push_back(gap);
        }
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed report JSON: ") + e.what());
    }
}

std::string render_table(const AnalysisReport& r) {
    std::ostringstream os;
    char line[256];
    os << "Dataset: " << (r.source.empty() ? "(unnamed)" : r.source) << "  k = " << r.k() << "\n";
    if (r.selection) {
        os << "Selection: " << to_string(r.selection->strategy) << ", Q_S = " << fixed(r.selection->q_s, 4) << " ("
           << r.selection->combinations_evaluated << " combination"
           << (r.selection->combinations_evaluated == 1 ? "" : "s") << ")\n";
    } else {
        os << "Selection: " << to_string(r.selection_mode) << "\n";
    }
    for (const auto& s : r.studies) {
        std::snprintf(line, sizeof line, "  %-24s %s\n", s.label.c_str(),
                      s.selected ? s.selected->c_str() : "(no split selected)");
        os << line;
    }

    const int pct = static_cast<int>(std::lround(r.level * 100.0));
    os << "\n";
    std::snprintf(line, sizeof line, "%-10s %9s  %-24s %4s  %7s\n", "Method", r.exponentiate ? "exp(est)" : "Estimate",
                  (std::to_string(pct) + "% CI").c_str(), "df", "tau");
    os << line;
    for (const auto& o : r.intervals) {
        if (!o.result) {
            std::snprintf(line, sizeof line, "%-10s  failed: %s\n", std::string(to_string(o.method)).c_str(),
                          o.error.c_str());
            os << line;
            continue;
        }
        const auto& ci = *o.result;
        auto show = [&](double v) { return fixed(r.exponentiate ? std::exp(v) : v); };
        const std::string interval = "[" + show(ci.lower) + ", " + show(ci.upper) + "]";
        const std::string df = ci.df ? std::to_string(*ci.df) : "-";
        std::snprintf(line, sizeof line, "%-10s %9s  %-24s %4s  %7s%s\n", std::string(to_string(o.method)).c_str(),
                      show(ci.point).c_str(), interval.c_str(), df.c_str(), fixed(std::sqrt(ci.tau2)).c_str(),
                      ci.fallback ? "  (study-level fallback)" : "");
        os << line;
    }

    os << "\nHeterogeneity: Q = " << fixed(r.q, 4);
    if (r.q_s) os << ", Q_S = " << fixed(*r.q_s, 4) << " (tau_DLS > 0 iff Q_S > " << 2 * r.k() - 1 << ")";
    os << "\n";
    for (const auto& h : r.heterogeneity) {
        std::snprintf(line, sizeof line, "  %-8s tau = %s  tau2 = %s  raw = %s\n",
                      std::string(to_string(h.method)).c_str(), fixed(std::sqrt(h.tau2)).c_str(),
                      fixed(h.tau2, 4).c_str(), fixed(h.tau2_raw, 4).c_str());
        os << line;
    }
    for (const auto& e : r.heterogeneity_errors) os << "  " << e.method << "  n/a: " << e.error << "\n";
    // All gaps are in the JSON; the table only flags the splits in use.
    for (const auto& g : r.consistency_gaps) {
        bool in_use = false;
        for (const auto& s : r.studies) in_use = in_use || (s.study_id == g.study_id && s.selected == g.split);
        if (!g.warning || !in_use) continue;
        os << "warning: study " << g.study_id << " row differs from the aggregate of split " << g.split
           << " (y gap " << fixed(g.y_gap, 4) << ", se ratio " << fixed(g.se_ratio, 4) << ")\n";
    }
    return os.str();
}

}  // namespace fewmeta
