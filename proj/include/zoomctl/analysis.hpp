#pragma once

// Proof quantities rebuilt from traces (frozen sequences, tau, Q, N), parameter
// feasibility with the epsilon bound, drift diagnostics, the second-moment
// recursion oracle and the containment checks.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoomctl/codec.hpp"
#include "zoomctl/control_loop.hpp"
#include "zoomctl/running_stats.hpp"
#include "zoomctl/stochastic_models.hpp"

namespace zoomctl {

// ---------------------------------------------------------------- frozen trace

/// The trace with X held at X_{n0} from n0 on. Mt follows
/// Mt[n] = P*Mt[n-1] if |X_{n0}| > Mt[n-1], else Mt[n-1], for n > n0, and is
/// extended up to and including the first step where it stays constant.
struct FrozenTrace {
    std::int64_t n0 = 0;
    std::vector<double> Xt;
    std::vector<double> Mt;
    std::vector<double> It;
};

/// Throws std::out_of_range if n0 is not a recorded row.
FrozenTrace freeze(const Trace& trace, std::int64_t n0);

// ---------------------------------------------------------- dominating sequence

/// tau[n] = first m >= n whose step is encoded normally; Q[n] = sqrt(M^2 + K I^2);
/// N[n] = Q[tau[n]] * 2^(tau[n] - n). Only indices with a defined tau are stored.
struct DominatingSeq {
    std::vector<std::int64_t> tau;
    std::vector<double> Q;
    std::vector<double> N;
    double K = 0.0;

    std::size_t size() const noexcept { return tau.size(); }
};

/// tau from the frozen sequences, using |Xt[m]| <= P * Mt[m-1] with Mt[-1] = M0.
/// Throws std::runtime_error naming the last index if some tau is undefined.
DominatingSeq dominating_seq(const FrozenTrace& frozen, double K, double P, double M0);

/// tau from the recorded modes of an unfrozen trace. Trailing emergency rows
/// have no tau yet and are left out.
DominatingSeq dominating_seq(const Trace& trace, double K);

struct DominationViolation {
    std::int64_t n0;
    double abs_X;
    double N;
};

struct DominationReport {
    std::size_t checked = 0;
    std::vector<DominationViolation> violations;
    bool passed() const noexcept { return violations.empty(); }
};

/// |X_{n0}| <= N_{n0} on freeze(trace, n0), exact comparison, for each n0.
DominationReport check_domination(const Trace& trace, double K, const std::vector<std::int64_t>& n0_set);

// ----------------------------------------------------------------- feasibility

class NotStabilizable : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Constants of the epsilon bound:
///   C  = (1 - m_alpha^(-1/alpha))^(-alpha)
///   C1 = 2^alpha * max(2^alpha, C)
///   C2 = C1 * max(m_alpha, ell_alpha)
///   C3 = C2 * (1 + M0^(-alpha))
///   C4 = 8 * C3
struct EpsilonConstants {
    double C, C1, C2, C3, C4;
};

EpsilonConstants epsilon_constants(double alpha, double M0, double m_alpha, double ell_alpha);

/// 4 * P^(2-alpha) * M0^(-alpha) * m_alpha; the bound needs this below 1.
double epsilon_ratio(double P, double M0, double alpha, double m_alpha);

/// C4 * P^(4-alpha) * m_alpha / (1 - ratio). Throws std::invalid_argument for
/// alpha <= 4 and std::domain_error when the ratio is >= 1.
double epsilon_bound(double P, double M0, double alpha, double m_alpha, double ell_alpha);

/// sigma_A^2 + (2|mu_A| + sigma_A)(2 P/L) + (2 + K)(P/L)^2.
double drift_coefficient(const StrategyParams& params, const Moments& A);

struct FeasibilityReport {
    bool ok = false;
    double c = 0.0;
    double alpha = 0.0;
    double sigma_A2 = 0.0;
    double mu_A = 0.0;
    double margin_drift = 0.0;          // (1 - c) - drift coefficient with |mu_A|
    double margin_drift_literal = 0.0;  // same with signed mu_A
    double margin_K = 0.0;              // (1 - c) K - mu_A^2
    double margin_K_literal = 0.0;      // (1 - c) K - mu_A
    double m_alpha = 0.0;
    double ell_alpha = 0.0;
    double epsilon_ratio = 0.0;
    double epsilon_estimate = 0.0;  // +inf when the ratio is >= 1
    double stability_limit = 0.0;   // min(1 - sigma_A^2, 3/4)
    double D = 0.0;
    double C = 0.0;
    int R = 0;
};

/// Throws NotStabilizable if sigma_A^2 >= 1 and std::invalid_argument if alpha <= 4.
FeasibilityReport feasibility(const DistributionSpec& A, const DistributionSpec& W, const StrategyParams& params,
                              double alpha);

/// D = 2 sigma_W^2 + (1 + K) M0^2.
double drift_constant(const StrategyParams& params, const Moments& W);

/// D / c, the uniform bound on E[N_n^2] and hence on E[X_n^2].
double theoretical_bound(const StrategyParams& params, const Moments& W);

struct SuggestOptions {
    double c = 0.2;
    double K = 2.0;
    double M0 = 4.0;
    double epsilon_target = 0.05;
};

struct Suggestion {
    StrategyParams params;
    FeasibilityReport report;
};

/// Smallest P (rounded up to two significant figures) with epsilon bound below
/// the target, then the smallest L with a positive drift margin.
Suggestion suggest_params(const DistributionSpec& A, const DistributionSpec& W, double alpha,
                          const SuggestOptions& options = {});

// ----------------------------------------------------------------------- drift

struct DriftIndexStats {
    std::int64_t n = 0;
    std::size_t count = 0;
    double mean_Nsq = 0.0;
    double stderr_Nsq = 0.0;
    double mean_excess = 0.0;  // mean of N_{n+1}^2 - (1 - c) N_n^2
    double stderr_excess = 0.0;
    bool flagged = false;      // mean_excess > D + 3 stderr_excess
    bool cap_exceeded = false;  // mean_Nsq > (D/c)(1 + 3 relative stderr)
};

struct DriftReport {
    double c = 0.0;
    double D = 0.0;
    double cap = 0.0;
    std::size_t traces = 0;
    std::vector<DriftIndexStats> per_index;
    std::vector<std::int64_t> flagged;
    std::vector<std::int64_t> cap_exceeded;
    std::size_t halving_checks = 0;
    std::size_t halving_violations = 0;
    std::size_t base_checks = 0;
    std::size_t base_violations = 0;  // N_0^2 != (1 + K) M0^2
    double max_mean_Nsq = 0.0;

    bool passed() const noexcept {
        return flagged.empty() && cap_exceeded.empty() && halving_violations == 0 && base_violations == 0;
    }
};

inline constexpr std::size_t kMinDriftTraces = 100;

/// Streaming drift statistics of N on unfrozen traces, indexed by time step.
class DriftAccumulator {
public:
    DriftAccumulator(const StrategyParams& params, const Moments& W);

    void add(const Trace& trace);
    std::size_t traces() const noexcept { return traces_; }
    double max_mean_Nsq() const;

    /// Throws std::invalid_argument with fewer than kMinDriftTraces traces.
    DriftReport report() const;

private:
    StrategyParams params_;
    double D_;
    std::size_t traces_ = 0;
    std::vector<RunningStats> nsq_;
    std::vector<RunningStats> excess_;
    std::size_t halving_checks_ = 0;
    std::size_t halving_violations_ = 0;
    std::size_t base_checks_ = 0;
    std::size_t base_violations_ = 0;
};

DriftReport drift_estimate(const std::vector<Trace>& traces, const StrategyParams& params, const Moments& W);

// ------------------------------------------------------------ moment recursion

enum class OraclePolicy { zero_control, perfect_observation };

/// E[X_n^2] from E_{n+1} = b2 E_n + sigma_W^2, E_0 = 0, where b2 = mu_A^2 + sigma_A^2
/// for zero control and sigma_A^2 for perfect observation.
double moment_recursion_oracle(OraclePolicy policy, const Moments& A, const Moments& W, std::int64_t n);

struct OracleCurve {
    std::vector<double> second;  // E[X_n^2], n = 0..n_max
    std::vector<double> fourth;  // E[X_n^4]

    /// sqrt((E X^4 - (E X^2)^2) / trials): the exact standard error of a mean of X_n^2.
    double stderr_of_mean(std::int64_t n, std::size_t trials) const;
};

/// Raw moments up to order four of X_{n+1} = B X_n + (W - mu_W) with B = A for
/// zero control and B = A - mu_A for perfect observation.
OracleCurve moment_recursion_curve(OraclePolicy policy, const DistributionSpec& A, const DistributionSpec& W,
                                   std::int64_t n_max);

// ----------------------------------------------------------------- containment

struct ContainmentReport {
    std::size_t normal_steps = 0;
    std::size_t unclamped_steps = 0;  // neither M nor I was raised to M0
    std::size_t interval_violations = 0;          // at unclamped steps
    std::size_t clamped_interval_violations = 0;  // informational: clamps may widen or shift the interval
    std::size_t control_error_violations = 0;
    std::size_t emergency_steps = 0;
    std::size_t emergency_violations = 0;
    std::vector<std::int64_t> first_violations;  // up to 10 step indices

    bool passed() const noexcept {
        return interval_violations == 0 && control_error_violations == 0 && emergency_violations == 0;
    }
    ContainmentReport& operator+=(const ContainmentReport& other);
};

/// At unclamped normal steps: X in rho [M - 2I, M]. At all normal steps:
/// |mu_A X - (U - mu_W)| <= |mu_A| I.
/// At emergency steps: U - mu_W == 0 and M == P M_prev exactly.
ContainmentReport check_containment(const Trace& trace);

}  // namespace zoomctl
