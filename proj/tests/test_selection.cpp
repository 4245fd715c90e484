#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fewmeta/dataset_io.hpp"
#include "fewmeta/estimators.hpp"
#include "fewmeta/selection.hpp"
#include "helpers.hpp"

using namespace fewmeta;
using testutil::split;
using testutil::study;

TEST_CASE("strategy names") {
    for (auto s : {SelectionStrategy::Local, SelectionStrategy::Global, SelectionStrategy::PValue}) {
        CHECK(selection_strategy_from_string(to_string(s)) == s);
    }
    CHECK_FALSE(selection_strategy_from_string("greedy").has_value());
}

TEST_CASE("within-study statistic and local choice") {
    CHECK(within_study_q(split("A", 0, 1, 8, 0, 1, 8)) == 0.0);
    CHECK(within_study_q(split("B", -1, 1, 8, 1, 1, 8)) == 2.0);

    const MetaDataset ds({study("S1", {split("A", 0, 1, 8, 0, 1, 8), split("B", -1, 1, 8, 1, 1, 8)}),
                          study("S2", {split("A", 0, 1, 8, 0, 1, 8)})});
    const auto r = select_local(ds);
    CHECK(r.chosen == std::vector<std::size_t>{1, 0});
    CHECK(r.strategy == SelectionStrategy::Local);
    CHECK(r.q_s == q_subgroup(ds.with_selection(r.chosen)));
}

TEST_CASE("local ties go to the lexicographically lowest split name") {
    const MetaDataset ds({study("S1", {split("zeta", -1, 1, 8, 1, 1, 8), split("alpha", 1, 1, 8, -1, 1, 8)}),
                          study("S2", {split("b", 0, 1, 8, 1, 1, 8), split("a", 0, 1, 8, 1, 1, 8)})});
    CHECK(select_local(ds).chosen == std::vector<std::size_t>{1, 1});
}

TEST_CASE("single candidate per study: local equals global bit-exactly") {
    const MetaDataset ds({study("S1", {split("A", 0.3, 0.4, 20, -0.2, 0.3, 40)}),
                          study("S2", {split("A", 0.1, 0.2, 60, 0.5, 0.6, 10)}),
                          study("S3", {split("A", -0.4, 0.5, 12, 0.0, 0.5, 12)})});
    const auto l = select_local(ds);
    const auto g = select_global(ds);
    CHECK(l.chosen == g.chosen);
    CHECK(l.q_s == g.q_s);
    CHECK(g.combinations_evaluated == 1);
    const auto h = qs_histogram(ds);
    CHECK(h.q_s.size() == 1);
    CHECK(h.threshold == 5.0);
}

TEST_CASE("combination numbering") {
    const MetaDataset ds({study("S1", {split("A", 0, 1, 8, 0, 1, 8), split("B", 0, 1, 8, 1, 1, 8)}),
                          study("S2", {split("A", 0, 1, 8, 0, 1, 8), split("B", 0, 1, 8, 2, 1, 8),
                                       split("C", 0, 1, 8, 3, 1, 8)})});
    CHECK(combination_count(ds) == 6);
    CHECK(decode_combination(ds, 0) == std::vector<std::size_t>{0, 0});
    CHECK(decode_combination(ds, 1) == std::vector<std::size_t>{0, 1});
    CHECK(decode_combination(ds, 3) == std::vector<std::size_t>{1, 0});
    CHECK(decode_combination(ds, 5) == std::vector<std::size_t>{1, 2});
    CHECK_THROWS(decode_combination(ds, 6));

    const auto h = qs_histogram(ds);
    REQUIRE(h.q_s.size() == 6);
    for (std::uint64_t id = 0; id < 6; ++id) {
        CHECK(h.q_s[id] == q_subgroup(ds.with_selection(decode_combination(ds, id))));
    }
}

TEST_CASE("global ties go to the first combination") {
    const MetaDataset ds({study("S1", {split("A", -1, 1, 8, 1, 1, 8), split("B", -1, 1, 8, 1, 1, 8)}),
                          study("S2", {split("A", -1, 1, 8, 1, 1, 8), split("B", -1, 1, 8, 1, 1, 8)})});
    const auto h = qs_histogram(ds);
    for (double v : h.q_s) CHECK(v == h.q_s[0]);
    CHECK(select_global(ds).chosen == std::vector<std::size_t>{0, 0});
}

TEST_CASE("budget") {
    std::vector<StudyRecord> rs;
    for (int i = 0; i < 4; ++i) {
        rs.push_back(study("S" + std::to_string(i), {split("A", 0, 1, 8, i, 1, 8), split("B", i, 1, 8, 0, 1, 8),
                                                      split("C", 0, 1, 8, 0, 1, 8)}));
    }
    const MetaDataset ds(rs);
    CHECK(combination_count(ds) == 81);
    CHECK_NOTHROW(select_global(ds, 81));
    try {
        select_global(ds, 80);
        FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& e) {
        CHECK(e.required() == 81);
        CHECK(e.budget() == 80);
    }
    CHECK_THROWS_AS(qs_histogram(ds, 10), BudgetExceeded);
}

TEST_CASE("global result is independent of the job count") {
    std::vector<StudyRecord> rs;
    for (int i = 0; i < 5; ++i) {
        std::vector<SubgroupSplit> sp;
        for (int s = 0; s < 4; ++s) {
            sp.push_back(split(std::string(1, char('a' + s)), 0.1 * ((i * 7 + s * 3) % 5), 0.3 + 0.05 * s, 20,
                               -0.1 * ((i + s) % 4), 0.4, 30));
        }
        rs.push_back(study("S" + std::to_string(i), sp));
    }
    const MetaDataset ds(rs);
    const auto one = select_global(ds, kDefaultMaxCombinations, 1);
    for (unsigned jobs : {2u, 3u, 8u}) {
        const auto many = select_global(ds, kDefaultMaxCombinations, jobs);
        CHECK(many.chosen == one.chosen);
        CHECK(many.q_s == one.q_s);
        CHECK(qs_histogram(ds, kDefaultMaxCombinations, jobs).q_s == qs_histogram(ds).q_s);
    }
    CHECK(one.q_s >= select_local(ds).q_s);
}

TEST_CASE("p-value strategy") {
    auto a1 = split("A", 0, 1, 8, 0, 1, 8);
    auto b1 = split("B", -1, 1, 8, 1, 1, 8);
    a1.p_interaction = 0.01;
    b1.p_interaction = 0.2;
    auto a2 = split("A", 0, 1, 8, 1, 1, 8);
    a2.p_interaction = 0.5;
    const MetaDataset ds({study("S1", {a1, b1}), study("S2", {a2})});
    const auto r = select_pvalue(ds);
    CHECK(r.chosen == std::vector<std::size_t>{0, 0});
    CHECK(r.strategy == SelectionStrategy::PValue);

    const MetaDataset missing({study("S1", {split("A", 0, 1, 8, 0, 1, 8)}), study("S2", {a2})});
    CHECK_THROWS_AS(select_pvalue(missing), ValidationError);
}

TEST_CASE("a study without candidates cannot be searched") {
    const MetaDataset ds({study("S1", {split("A", 0, 1, 8, 0, 1, 8)}), study("S2", 0.1, 0.3)});
    CHECK_THROWS_AS(select_local(ds), ValidationError);
    CHECK_THROWS_AS(select_global(ds), ValidationError);
}

TEST_CASE("bundled SGLT2 search") {
    const auto ds = load_dataset(testutil::data_path("sglt2.csv"));
    const auto h = qs_histogram(ds);
    CHECK(h.q_s.size() == 4096);
    CHECK(h.threshold == 11.0);
    const auto g = select_global(ds);
    CHECK(g.combinations_evaluated == 4096);
    CHECK(g.q_s == *std::max_element(h.q_s.begin(), h.q_s.end()));
    CHECK(std::abs(g.q_s - 18.24) <= 0.05);
    const auto l = select_local(ds);
    CHECK(std::abs(l.q_s - 18.194) <= 0.05);
    // The two selections differ in exactly one study.
    std::vector<std::string> differ;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (g.chosen[i] != l.chosen[i]) differ.push_back(ds[i].estimate.study_id);
    }
    CHECK(differ == std::vector<std::string>{"CANVAS"});
}

TEST_CASE("bundled RESPIRE selections") {
    auto names = [](const MetaDataset& ds, const std::vector<std::size_t>& chosen) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(ds[i].splits[chosen[i]].name);
        return out;
    };
    const auto r14 = load_dataset(testutil::data_path("respire14.csv"));
    CHECK(names(r14, select_global(r14).chosen) == std::vector<std::string>{"sex", "sex"});
    CHECK(select_local(r14).chosen == select_global(r14).chosen);
    const auto r28 = load_dataset(testutil::data_path("respire28.csv"));
    CHECK(names(r28, select_global(r28).chosen) == std::vector<std::string>{"sex", "age"});
    CHECK(select_local(r28).chosen == select_global(r28).chosen);

    const auto sg = load_dataset(testutil::data_path("sglt2.csv"));
    const auto g = names(sg, select_global(sg).chosen);
    const auto l = names(sg, select_local(sg).chosen);
    CHECK(g == std::vector<std::string>{"eGFR", "heart_failure", "eGFR", "diuretic", "HbA1c", "heart_failure"});
    CHECK(l == std::vector<std::string>{"diuretic", "heart_failure", "eGFR", "diuretic", "HbA1c", "heart_failure"});
}
