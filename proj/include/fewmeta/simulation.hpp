// Monte Carlo harness: three-level hierarchical data (studies, subgroups,
// observations) and the operating characteristics of every heterogeneity
// estimator and interval method.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewmeta/estimators.hpp"
#include "fewmeta/intervals.hpp"
#include "fewmeta/rng.hpp"

namespace fewmeta {

inline constexpr int kGridK[] = {2, 3, 5};
inline constexpr double kGridTau[] = {0.0, 0.1, 0.2, 0.5, 1.0};
inline constexpr double kGridDelta[] = {0.0, 0.1, 0.2, 0.5, 1.0};
inline constexpr double kGridSigmaDelta[] = {0.0, 0.1, 0.2, 0.5, 1.0};
inline constexpr double kGridPrevalence[] = {1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0};

/// Study sizes above this are clamped so arm sizes fit in an int.
inline constexpr long long kMaxStudySize = 1'200'000'000LL;

struct Scenario {
    int k = 2;
    double mu = 0.0;
    double tau = 0.0;
    double delta = 0.0;
    double sigma_delta = 0.0;
    double p = 1.0 / 3.0;
    double sigma_u = 4.0;
    int n_reps = 1000;
    std::uint64_t seed = 0;
    double sizes_meanlog = 5.0;
    double sizes_sdlog = 1.0;

    /// Throws ValidationError on out-of-domain parameters.
    void validate() const;
    /// True when k, tau, delta, sigma_delta and p are all grid values.
    bool on_grid() const noexcept;
    /// Canonical text of the generating parameters (not n_reps or seed);
    /// identifies the scenario's random streams.
    std::string key() const;
};

/// Empty lists mean "every grid value".
struct GridFilter {
    std::vector<int> k;
    std::vector<double> tau;
    std::vector<double> delta;
    std::vector<double> sigma_delta;
    std::vector<double> p;
};

/// Cartesian product over k, tau, delta, sigma_delta, p (that nesting
/// order); remaining fields are copied from `base`. Throws when empty.
std::vector<Scenario> scenario_grid(const GridFilter& filter = {}, const Scenario& base = {});

/// max{12, nearest multiple of 12 of a lognormal(meanlog, sdlog) draw}.
std::vector<long long> draw_study_sizes(int k, double meanlog, double sdlog, Rng& rng);

struct SimulatedTables {
    StudyTable study;
    SubgroupTable sub;
    std::vector<double> theta;  // true study effects
    std::vector<std::array<double, 2>> theta_sub;
    std::vector<long long> sizes;
};

/// One meta-analysis. Draw order: study sizes, then per study theta_i,
/// delta_i, y_i1, y_i2. Study rows are the inverse-variance aggregates of
/// the two arms.
SimulatedTables generate_tables(const Scenario& s, Rng& rng);
/// Same draws with the study sizes held fixed.
SimulatedTables generate_tables(const Scenario& s, const std::vector<long long>& sizes, Rng& rng);

/// generate_tables wrapped as a dataset with a single selected split.
MetaDataset generate_meta_analysis(const Scenario& s, Rng& rng);
MetaDataset to_dataset(const SimulatedTables& t);

inline constexpr TauMethod kTauMethods[] = {TauMethod::DL, TauMethod::DLS, TauMethod::DLS_ADJ, TauMethod::MAX1,
                                            TauMethod::MAX2};

struct TauMetrics {
    TauMethod method = TauMethod::DL;
    std::uint64_t evaluated = 0;
    std::uint64_t failures = 0;
    double mean_tau_hat = 0.0;
    double bias = 0.0;  // mean tau_hat - tau
    double bias_mc_se = 0.0;
    std::uint64_t zero_count = 0;
    double zero_proportion = 0.0;
    double zero_mc_se = 0.0;
};

struct CIMetrics {
    CIMethod method = CIMethod::Normal;
    std::uint64_t evaluated = 0;
    std::uint64_t failures = 0;
    std::uint64_t covered = 0;
    double coverage = 0.0;
    double coverage_mc_se = 0.0;
    double median_length = 0.0;
    /// Half-width of the distribution-free 95% interval for the median over 1.96.
    double median_length_mc_se = 0.0;
};

struct ScenarioMetrics {
    Scenario scenario;
    std::uint64_t replicates = 0;
    std::vector<TauMetrics> tau;  // kTauMethods order
    std::vector<CIMetrics> ci;    // kAllMethods order
    /// Replicates with DL = 0 and DLS = 0; equals the MAX1 zero count.
    std::uint64_t dl_and_dls_zero = 0;
    std::uint64_t chain_checked = 0;
    std::uint64_t chain_violations = 0;
    /// Largest |study-level mu_CE - subgroup-level mu_CE| seen.
    double max_mu_ce_gap = 0.0;

    const TauMetrics& tau_of(TauMethod m) const;
    const CIMetrics& ci_of(CIMethod m) const;
};

/// Replicates may be spread over `jobs` threads (0 = hardware concurrency);
/// the result is bit-identical for any job count.
ScenarioMetrics run_scenario(const Scenario& s, unsigned jobs = 1, double level = 0.95);
/// Scenarios are distributed over workers; output order matches input.
std::vector<ScenarioMetrics> run_scenarios(const std::vector<Scenario>& scenarios, unsigned jobs = 1,
                                           double level = 0.95);

struct ExpectationReport {
    Scenario scenario;
    std::vector<long long> sizes;
    int n_reps = 0;
    double mean_raw = 0.0;
    double mc_se = 0.0;
    double expected = 0.0;
    bool passed = false;
};

/// Mean untruncated tau2_DLS over n_reps draws at fixed study sizes against
/// A tau^2 + (Delta^2 + sigma_Delta^2) B_coefficient; passes within 3 MC SEs.
/// Empty `sizes` draws them once from the scenario's stream.
ExpectationReport validate_expectation(const Scenario& s, int n_reps, std::vector<long long> sizes = {});

}  // namespace fewmeta
