#pragma once

// Monte Carlo ensembles over seeded trials: second-moment curves, stability
// verdicts and parameter sweeps.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "zoomctl/codec.hpp"
#include "zoomctl/control_loop.hpp"
#include "zoomctl/stochastic_models.hpp"

namespace zoomctl {

struct AdaptiveFixedRate {};

/// Fixed uniform partition of [-range, range] with the same 2L + 1 symbols and
/// the same control law; states outside the range get the overflow symbol 2L
/// and U = mu_W.
struct StaticQuantizer {
    double range = 0.0;  // 0 selects the default 10 * M0
};

/// U = mu_A X + mu_W.
struct PerfectObservation {};

/// U = mu_W.
struct ZeroControl {};

using Policy = std::variant<AdaptiveFixedRate, StaticQuantizer, PerfectObservation, ZeroControl>;

std::string policy_name(const Policy& policy);
/// Parses a policy name; a static quantizer gets the default range.
std::optional<Policy> parse_policy(const std::string& name);

struct ExperimentConfig {
    DistributionSpec A = DistributionSpec::gaussian(1.0, 0.5);
    DistributionSpec W = DistributionSpec::gaussian(0.0, 1.0);
    StrategyParams params;
    Policy policy = AdaptiveFixedRate{};
    std::int64_t horizon = 10000;
    std::size_t trials = 100;
    std::uint64_t master_seed = 1;
    double alpha = 4.5;
    double split = 0.5;  // verdict windows start at horizon * split

    /// Throws std::invalid_argument on the first bad field.
    void validate() const;
    double static_range() const;
};

/// Resolved configuration as ordered key/value pairs, in config-file syntax.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

struct CurvePoint {
    std::int64_t n = 0;
    double mean = 0.0;    // mean of X_n^2 over non-diverged trials
    double stderr_mean = 0.0;  // sample standard error of that mean
    std::size_t count = 0;
};

struct SummaryStats {
    std::vector<CurvePoint> second_moment_curve;
    std::int64_t horizon = 0;
    std::size_t trials = 0;
    std::size_t diverged_count = 0;
    std::size_t tracker_mismatches = 0;
    std::uint64_t max_symbol = 0;
    double emergency_fraction = 0.0;
    double window_ratio = 0.0;
    double max_mean_Nsq = 0.0;  // NaN unless the policy is adaptive
    double terminal_mean = 0.0;
};

enum class Verdict { stable, unstable, inconclusive };

std::string to_string(Verdict v);

/// Mean of the curve over [H(1+s)/2, H] divided by its mean over [H s, H(1+s)/2).
double window_ratio(const std::vector<CurvePoint>& curve, double split);

/// unstable if every trial or more than 1% of trials diverged; inconclusive if
/// the horizon is below 1000; stable if the window ratio is in [0.5, 1.5] with
/// no divergence; unstable if the ratio exceeds 4; inconclusive otherwise.
Verdict stability_verdict(const SummaryStats& stats, double split = 0.5);

/// Seed of trial `index`: a splitmix64 mix of the master seed and the index.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

/// Worker count from ZOOMCTL_THREADS, else the hardware concurrency.
unsigned thread_count();

/// One trial of cfg.policy with seed derive_seed(cfg.master_seed, index).
Trace run_policy_trial(const ExperimentConfig& cfg, std::size_t index);

struct RunOptions {
    std::size_t keep_traces = 0;  // retain traces of the first trials
    unsigned threads = 0;         // 0 selects thread_count()
    /// Visits every trace, diverged or not, in trial order.
    std::function<void(std::size_t, const Trace&)> on_trace = {};
};

struct ExperimentResult {
    SummaryStats stats;
    std::vector<Trace> kept;
};

/// Throws std::invalid_argument for an invalid config.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

enum class SweepDim { P, L, K, M0, R };

std::string to_string(SweepDim d);
std::optional<SweepDim> parse_sweep_dim(const std::string& s);

/// cfg with one strategy field replaced; R = r sets L = 2^(r-1) - 1.
ExperimentConfig with_dimension(const ExperimentConfig& cfg, SweepDim dim, double value);

struct SweepRow {
    double value = 0.0;
    StrategyParams params;
    int R = 0;
    SummaryStats stats;
    Verdict verdict = Verdict::inconclusive;
    bool feasible = false;
    double margin_drift = 0.0;
};

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepDim dim, const std::vector<double>& values,
                            const RunOptions& options = {});

using Provenance = std::vector<std::pair<std::string, std::string>>;

/// Columns n,mean,stderr,count after '#' provenance lines.
void write_curve_csv(std::ostream& os, const SummaryStats& stats, const Provenance& provenance);
void write_sweep_csv(std::ostream& os, SweepDim dim, const std::vector<SweepRow>& rows,
                     const Provenance& provenance);
std::string summary_json(const ExperimentConfig& cfg, const SummaryStats& stats, Verdict verdict);

}  // namespace zoomctl
