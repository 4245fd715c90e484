#include "fewmeta/selection.hpp"

#include <algorithm>
#include <limits>
#include <thread>

#include "fewmeta/estimators.hpp"

namespace fewmeta {

std::string_view to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Local: return "local";
        case SelectionStrategy::Global: return "global";
        case SelectionStrategy::PValue: return "pvalue";
    }
    return "?";
}

std::optional<SelectionStrategy> selection_strategy_from_string(std::string_view s) {
    for (auto v : {SelectionStrategy::Local, SelectionStrategy::Global, SelectionStrategy::PValue}) {
        if (to_string(v) == s) return v;
    }
    return std::nullopt;
}

namespace {

void require_candidates(const MetaDataset& ds) {
    require_analyzable(ds);
    for (const auto& s : ds.studies()) {
        if (s.splits.empty()) {
            throw ValidationError("study " + s.estimate.study_id + " has no candidate subgroup split");
        }
    }
}

double q_of(const MetaDataset& ds, const std::vector<std::size_t>& chosen) {
    return q_subgroup(ds.with_selection(chosen));
}

// Picks, per study, the split minimizing key(); ties go to the lowest name.
template <class Better>
std::vector<std::size_t> per_study_best(const MetaDataset& ds, Better better) {
    std::vector<std::size_t> chosen;
    chosen.reserve(ds.size());
    for (const auto& s : ds.studies()) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < s.splits.size(); ++c) {
            const int cmp = better(s.splits[c], s.splits[best]);
            if (cmp > 0 || (cmp == 0 && s.splits[c].name < s.splits[best].name)) best = c;
        }
        chosen.push_back(best);
    }
    return chosen;
}

unsigned resolve_jobs(unsigned jobs, std::uint64_t work) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    // Small searches are not worth a thread each.
    const std::uint64_t per_job = 4096;
    const std::uint64_t useful = std::max<std::uint64_t>(1, work / per_job);
    return static_cast<unsigned>(std::min<std::uint64_t>(jobs, useful));
}

// Calls visit(id, q_s) for every id in [begin, end), walking the ids like an
// odometer so only the studies whose digit changed are rewritten.
template <class Visit>
void enumerate_range(const MetaDataset& ds, std::uint64_t begin, std::uint64_t end, Visit visit) {
    if (begin >= end) return;
    const std::size_t k = ds.size();
    auto digits = decode_combination(ds, begin);
    SubgroupTable table;
    table.y.resize(k);
    table.se.resize(k);
    table.prevalence.resize(k);
    for (std::size_t i = 0; i < k; ++i) table.assign(i, ds[i].splits[digits[i]]);
    for (std::uint64_t id = begin;;) {
        visit(id, q_subgroup(table));
        if (++id == end) break;
        for (std::size_t i = k; i-- > 0;) {
            if (++digits[i] < ds[i].splits.size()) {
                table.assign(i, ds[i].splits[digits[i]]);
                break;
            }
            digits[i] = 0;
            table.assign(i, ds[i].splits[0]);
        }
    }
}

template <class Work>
void run_chunks(std::uint64_t total, unsigned jobs, Work work) {
    if (jobs <= 1) {
        work(0u, std::uint64_t{0}, total);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned t = 0; t < jobs; ++t) {
        const std::uint64_t b = total * t / jobs;
        const std::uint64_t e = total * (t + 1) / jobs;
        pool.emplace_back(work, t, b, e);
    }
    for (auto& th : pool) th.join();
}

std::uint64_t checked_count(const MetaDataset& ds, std::uint64_t max_combinations) {
    const auto n = combination_count(ds);
    if (n > max_combinations) throw BudgetExceeded(n, max_combinations);
    return n;
}

}  // namespace

std::uint64_t combination_count(const MetaDataset& ds) {
    std::uint64_t n = 1;
    for (auto c : ds.split_counts()) {
        if (c == 0) return 0;
        if (n > std::numeric_limits<std::uint64_t>::max() / c) return std::numeric_limits<std::uint64_t>::max();
        n *= c;
    }
    return n;
}

std::vector<std::size_t> decode_combination(const MetaDataset& ds, std::uint64_t id) {
    const auto counts = ds.split_counts();
    std::vector<std::size_t> digits(counts.size());
    for (std::size_t i = counts.size(); i-- > 0;) {
        if (counts[i] == 0) throw ValidationError("study " + ds[i].estimate.study_id + " has no candidate split");
        digits[i] = static_cast<std::size_t>(id % counts[i]);
        id /= counts[i];
    }
    if (id != 0) throw ValidationError("combination id out of range");
    return digits;
}

double within_study_q(const SubgroupSplit& split) {
    const auto agg = aggregate_study(split);
    double q = 0.0;
    for (const auto& a : split.arms) q += (a.y - agg.y) * (a.y - agg.y) / (a.se * a.se);
    return q;
}

SelectionResult select_local(const MetaDataset& ds) {
    require_candidates(ds);
    SelectionResult r;
    r.strategy = SelectionStrategy::Local;
    r.chosen = per_study_best(ds, [](const SubgroupSplit& a, const SubgroupSplit& b) {
        const double qa = within_study_q(a);
        const double qb = within_study_q(b);
        return qa > qb ? 1 : (qa < qb ? -1 : 0);
    });
    r.q_s = q_of(ds, r.chosen);
    r.combinations_evaluated = 1;
    return r;
}

SelectionResult select_pvalue(const MetaDataset& ds) {
    require_candidates(ds);
    for (const auto& s : ds.studies()) {
        for (const auto& sp : s.splits) {
            if (!sp.p_interaction) {
                throw ValidationError("split " + sp.name + " of study " + s.estimate.study_id +
                                      " has no p_interaction; the pvalue strategy needs one on every split");
            }
        }
    }
    SelectionResult r;
    r.strategy = SelectionStrategy::PValue;
    r.chosen = per_study_best(ds, [](const SubgroupSplit& a, const SubgroupSplit& b) {
        const double pa = *a.p_interaction;
        const double pb = *b.p_interaction;
        return pa < pb ? 1 : (pa > pb ? -1 : 0);
    });
    r.q_s = q_of(ds, r.chosen);
    r.combinations_evaluated = 1;
    return r;
}

SelectionResult select_global(const MetaDataset& ds, std::uint64_t max_combinations, unsigned jobs) {
    require_candidates(ds);
    const auto total = checked_count(ds, max_combinations);
    jobs = resolve_jobs(jobs, total);

    struct Best {
        std::uint64_t id = 0;
        double q = -std::numeric_limits<double>::infinity();
    };
    std::vector<Best> best(std::max(1u, jobs));
    run_chunks(total, jobs, [&](unsigned t, std::uint64_t b, std::uint64_t e) {
        Best local;
        enumerate_range(ds, b, e, [&](std::uint64_t id, double q) {
            if (q > local.q) local = Best{id, q};
        });
        best[t] = local;
    });
    // Chunks are in id order, so a strict comparison keeps the first maximum.
    Best overall = best.front();
    for (const auto& b : best) {
        if (b.q > overall.q) overall = b;
    }

    SelectionResult r;
    r.strategy = SelectionStrategy::Global;
    r.chosen = decode_combination(ds, overall.id);
    r.q_s = overall.q;
    r.combinations_evaluated = total;
    return r;
}

SelectionResult select(const MetaDataset& ds, SelectionStrategy strategy, std::uint64_t max_combinations,
                       unsigned jobs) {
    switch (strategy) {
        case SelectionStrategy::Local: return select_local(ds);
        case SelectionStrategy::Global: return select_global(ds, max_combinations, jobs);
        case SelectionStrategy::PValue: return select_pvalue(ds);
    }
    throw std::logic_error("unknown selection strategy");
}

QsHistogram qs_histogram(const MetaDataset& ds, std::uint64_t max_combinations, unsigned jobs) {
    require_candidates(ds);
    const auto total = checked_count(ds, max_combinations);
    jobs = resolve_jobs(jobs, total);
    QsHistogram h;
    h.q_s.resize(total);
    h.threshold = 2.0 * static_cast<double>(ds.size()) - 1.0;
    run_chunks(total, jobs, [&](unsigned, std::uint64_t b, std::uint64_t e) {
        enumerate_range(ds, b, e, [&](std::uint64_t id, double q) { h.q_s[id] = q; });
    });
    return h;
}

}  // namespace fewmeta
