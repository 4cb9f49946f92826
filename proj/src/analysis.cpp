#include "zoomctl/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "zoomctl/format.hpp"

namespace zoomctl {

// ---------------------------------------------------------------- frozen trace

FrozenTrace freeze(const Trace& trace, std::int64_t n0) {
    if (n0 < 0 || n0 >= static_cast<std::int64_t>(trace.rows.size())) {
        throw std::out_of_range("freeze: n0 = " + std::to_string(n0) + " is outside the recorded rows [0, " +
                                std::to_string(trace.rows.size()) + ")");
    }
    FrozenTrace f;
    f.n0 = n0;
    const auto len = static_cast<std::size_t>(n0) + 1;
    f.Xt.reserve(len + 8);
    f.Mt.reserve(len + 8);
    f.It.reserve(len + 8);
    for (std::size_t n = 0; n < len; ++n) {
        f.Xt.push_back(trace.rows[n].X);
        f.Mt.push_back(trace.rows[n].M);
        f.It.push_back(trace.rows[n].I);
    }
    const double x0 = trace.rows[len - 1].X;
    const double i0 = trace.rows[len - 1].I;
    const double P = trace.params.P;
    for (;;) {
        const double prev = f.Mt.back();
        const double next = std::abs(x0) > prev ? P * prev : prev;
        if (!std::isfinite(next)) throw std::overflow_error("freeze: frozen range overflowed");
        f.Xt.push_back(x0);
        f.Mt.push_back(next);
        f.It.push_back(i0);
        if (next == prev) break;
    }
    return f;
}

// ---------------------------------------------------------- dominating sequence

namespace {

// normal[m] says whether tau may stop at m; M and I give Q.
DominatingSeq build_dominating(const std::vector<bool>& normal, const std::vector<double>& M,
                               const std::vector<double>& I, double K) {
    const std::size_t T = normal.size();
    std::size_t defined = T;
    while (defined > 0 && !normal[defined - 1]) --defined;

    DominatingSeq d;
    d.K = K;
    d.tau.resize(defined);
    d.Q.resize(defined);
    d.N.resize(defined);
    std::int64_t next = -1;
    for (std::size_t i = defined; i-- > 0;) {
        if (normal[i]) next = static_cast<std::int64_t>(i);
        d.tau[i] = next;
        d.Q[i] = std::sqrt(M[i] * M[i] + K * I[i] * I[i]);
    }
    for (std::size_t i = 0; i < defined; ++i) {
        const auto t = static_cast<std::size_t>(d.tau[i]);
        d.N[i] = std::ldexp(d.Q[t], static_cast<int>(t - i));
    }
    return d;
}

}  // namespace

DominatingSeq dominating_seq(const FrozenTrace& frozen, double K, double P, double M0) {
    const std::size_t T = frozen.Xt.size();
    if (frozen.Mt.size() != T || frozen.It.size() != T) {
        throw std::invalid_argument("dominating_seq: frozen sequences differ in length");
    }
    std::vector<bool> normal(T);
    for (std::size_t m = 0; m < T; ++m) {
        const double prev = m == 0 ? M0 : frozen.Mt[m - 1];
        normal[m] = std::abs(frozen.Xt[m]) <= P * prev;
    }
    DominatingSeq d = build_dominating(normal, frozen.Mt, frozen.It, K);
    if (d.size() != T) {
        throw std::runtime_error("dominating_seq: tau is undefined after index " + std::to_string(T - 1) +
                                 " (the emergency never ends in the available data)");
    }
    return d;
}

DominatingSeq dominating_seq(const Trace& trace, double K) {
    const std::size_t T = trace.rows.size();
    std::vector<bool> normal(T);
    std::vector<double> M(T), I(T);
    for (std::size_t m = 0; m < T; ++m) {
        normal[m] = trace.rows[m].mode == Mode::normal;
        M[m] = trace.rows[m].M;
        I[m] = trace.rows[m].I;
    }
    return build_dominating(normal, M, I, K);
}

DominationReport check_domination(const Trace& trace, double K, const std::vector<std::int64_t>& n0_set) {
    DominationReport r;
    for (const std::int64_t n0 : n0_set) {
        const FrozenTrace f = freeze(trace, n0);
        const DominatingSeq d = dominating_seq(f, K, trace.params.P, trace.params.M0);
        const double ax = std::abs(trace.rows[static_cast<std::size_t>(n0)].X);
        const double N = d.N[static_cast<std::size_t>(n0)];
        ++r.checked;
        if (!(ax <= N)) r.violations.push_back({n0, ax, N});
    }
    return r;
}

// ----------------------------------------------------------------- feasibility

EpsilonConstants epsilon_constants(double alpha, double M0, double m_alpha, double ell_alpha) {
    EpsilonConstants k{};
    k.C = std::pow(1.0 - std::pow(m_alpha, -1.0 / alpha), -alpha);
    k.C1 = std::pow(2.0, alpha) * std::max(std::pow(2.0, alpha), k.C);
    k.C2 = k.C1 * std::max(m_alpha, ell_alpha);
    k.C3 = k.C2 * (1.0 + std::pow(M0, -alpha));
    k.C4 = 8.0 * k.C3;
    return k;
}

double epsilon_ratio(double P, double M0, double alpha, double m_alpha) {
    return 4.0 * std::pow(P, 2.0 - alpha) * std::pow(M0, -alpha) * m_alpha;
}

double epsilon_bound(double P, double M0, double alpha, double m_alpha, double ell_alpha) {
    if (!(alpha > 4.0)) {
        throw std::invalid_argument("epsilon_bound: alpha must exceed 4, got " + format_double(alpha));
    }
    if (!(P > 1.0) || !(M0 > 0.0)) throw std::invalid_argument("epsilon_bound: need P > 1 and M0 > 0");
    if (!(m_alpha >= 2.0) || !(ell_alpha >= 0.0)) {
        throw std::invalid_argument("epsilon_bound: need m_alpha >= 2 and ell_alpha >= 0");
    }
    const double ratio = epsilon_ratio(P, M0, alpha, m_alpha);
    if (!(ratio < 1.0)) {
        throw std::domain_error("epsilon_bound: series ratio 4 P^(2-alpha) M0^(-alpha) m_alpha = " +
                                format_double(ratio) + " is >= 1; increase P or M0");
    }
    const EpsilonConstants k = epsilon_constants(alpha, M0, m_alpha, ell_alpha);
    return k.C4 * std::pow(P, 4.0 - alpha) * m_alpha / (1.0 - ratio);
}

namespace {

double drift_coefficient_with(double mu, const StrategyParams& params, double sigma_A) {
    const double pd = params.P / static_cast<double>(params.L);
    return sigma_A * sigma_A + (2.0 * mu + sigma_A) * (2.0 * pd) + (2.0 + params.K) * pd * pd;
}

}  // namespace

double drift_coefficient(const StrategyParams& params, const Moments& A) {
    return drift_coefficient_with(std::abs(A.mean), params, std::sqrt(A.variance));
}

double drift_constant(const StrategyParams& params, const Moments& W) {
    return 2.0 * W.variance + (1.0 + params.K) * params.M0 * params.M0;
}

double theoretical_bound(const StrategyParams& params, const Moments& W) {
    return drift_constant(params, W) / params.c;
}

FeasibilityReport feasibility(const DistributionSpec& A, const DistributionSpec& W, const StrategyParams& params,
                              double alpha) {
    params.validate();
    const Moments ma = moments(A);
    const Moments mw = moments(W);
    if (!(ma.variance < 1.0)) {
        throw NotStabilizable("not second-moment stabilizable: sigma_A^2 = " + format_double(ma.variance) +
                              " >= 1");
    }
    if (!(alpha > 4.0)) {
        throw std::invalid_argument("alpha must exceed 4 (finite (4+eps)-th moments are required), got " +
                                    format_double(alpha));
    }
    FeasibilityReport r;
    r.c = params.c;
    r.alpha = alpha;
    r.sigma_A2 = ma.variance;
    r.mu_A = ma.mean;
    const double one_minus_c = 1.0 - params.c;
    const double sigma_A = std::sqrt(ma.variance);
    r.margin_drift = one_minus_c - drift_coefficient_with(std::abs(ma.mean), params, sigma_A);
    r.margin_drift_literal = one_minus_c - drift_coefficient_with(ma.mean, params, sigma_A);
    r.margin_K = one_minus_c * params.K - ma.mean * ma.mean;
    r.margin_K_literal = one_minus_c * params.K - ma.mean;

    r.m_alpha = m_alpha(summarize(A, alpha));
    r.ell_alpha = ell_alpha(W, alpha);
    r.epsilon_ratio = epsilon_ratio(params.P, params.M0, alpha, r.m_alpha);
    r.epsilon_estimate = r.epsilon_ratio < 1.0
                             ? epsilon_bound(params.P, params.M0, alpha, r.m_alpha, r.ell_alpha)
                             : std::numeric_limits<double>::infinity();
    r.stability_limit = std::min(1.0 - ma.variance, 0.75);
    r.D = drift_constant(params, mw);
    r.C = r.D / params.c;
    r.R = rate(params);
    r.ok = r.margin_drift >= 0.0 && r.margin_K >= 0.0 && params.c + r.epsilon_estimate < r.stability_limit;
    return r;
}

Suggestion suggest_params(const DistributionSpec& A, const DistributionSpec& W, double alpha,
                          const SuggestOptions& options) {
    if (!(alpha > 4.0)) {
        throw std::invalid_argument("alpha must exceed 4 (finite (4+eps)-th moments are required), got " +
                                    format_double(alpha));
    }
    if (!(options.epsilon_target > 0.0)) throw std::invalid_argument("suggest: epsilon target must be positive");
    const Moments ma = moments(A);
    if (!(ma.variance < 1.0)) {
        throw NotStabilizable("not second-moment stabilizable: sigma_A^2 = " + format_double(ma.variance) +
                              " >= 1");
    }
    const double m = m_alpha(summarize(A, alpha));
    const double l = ell_alpha(W, alpha);
    auto bound = [&](double P) {
        if (!(epsilon_ratio(P, options.M0, alpha, m) < 1.0)) return std::numeric_limits<double>::infinity();
        return epsilon_bound(P, options.M0, alpha, m, l);
    };

    double hi = 2.0;
    while (!(bound(hi) < options.epsilon_target)) {
        hi *= 2.0;
        if (!std::isfinite(hi) || hi > 1e300) throw std::runtime_error("suggest: no P reaches the epsilon target");
    }
    double lo = hi / 2.0;
    for (int i = 0; i < 200 && lo < hi; ++i) {
        const double mid = lo + (hi - lo) / 2.0;
        if (mid <= lo || mid >= hi) break;
        (bound(mid) < options.epsilon_target ? hi : lo) = mid;
    }
    const double unit = std::pow(10.0, std::floor(std::log10(hi)) - 1.0);
    double P = std::ceil(hi / unit) * unit;
    while (!(bound(P) < options.epsilon_target)) P += unit;

    const double s = 1.0 - options.c - ma.variance;
    if (!(s > 0.0)) {
        throw std::invalid_argument("suggest: c = " + format_double(options.c) + " must be below 1 - sigma_A^2 = " +
                                    format_double(1.0 - ma.variance));
    }
    const double sigma_A = std::sqrt(ma.variance);
    const double a = 2.0 + options.K;
    const double b = 2.0 * (2.0 * std::abs(ma.mean) + sigma_A);
    const double root = (-b + std::sqrt(b * b + 4.0 * a * s)) / (2.0 * a);
    const double L_real = P / root;
    if (!(L_real < static_cast<double>(kMaxCellsPerSide))) {
        throw std::runtime_error("suggest: required L = " + format_double(L_real) + " exceeds 2^61");
    }

    StrategyParams p;
    p.P = P;
    p.M0 = options.M0;
    p.K = options.K;
    p.c = options.c;
    p.L = std::max<std::int64_t>(1, static_cast<std::int64_t>(L_real) - 2);
    auto margin = [&](std::int64_t L) {
        StrategyParams q = p;
        q.L = L;
        return (1.0 - options.c) - drift_coefficient(q, ma);
    };
    int steps = 0;
    while (!(margin(p.L) > 0.0)) {
        if (++steps > 100000 || p.L >= kMaxCellsPerSide) throw std::runtime_error("suggest: no L found");
        ++p.L;
    }
    // P / L is rounded, so the margin is only monotone in L up to a few ulps.
    while (p.L > 1 && margin(p.L - 1) > 0.0) {
        if (++steps > 200000) throw std::runtime_error("suggest: no L found");
        --p.L;
    }
    return {p, feasibility(A, W, p, alpha)};
}

// ----------------------------------------------------------------------- drift

DriftAccumulator::DriftAccumulator(const StrategyParams& params, const Moments& W)
    : params_(params), D_(drift_constant(params, W)) {
    params_.validate();
}

void DriftAccumulator::add(const Trace& trace) {
    if (trace.diverged) return;
    ++traces_;
    const DominatingSeq d = dominating_seq(trace, params_.K);
    const std::size_t S = d.size();
    if (nsq_.size() < S) nsq_.resize(S);
    if (excess_.size() + 1 < S) excess_.resize(S - 1);
    const double keep = 1.0 - params_.c;
    for (std::size_t n = 0; n < S; ++n) {
        const double nsq = d.N[n] * d.N[n];
        nsq_[n].add(nsq);
        if (n + 1 < S) {
            excess_[n].add(d.N[n + 1] * d.N[n + 1] - keep * nsq);
            if (d.tau[n] > static_cast<std::int64_t>(n)) {
                ++halving_checks_;
                if (!(d.N[n + 1] == d.N[n] / 2.0)) ++halving_violations_;
            }
        }
    }
    if (S > 0 && params_.P <= static_cast<double>(params_.L)) {
        ++base_checks_;
        const double expected = (1.0 + params_.K) * params_.M0 * params_.M0;
        const double got = d.N[0] * d.N[0];
        if (!(std::abs(got - expected) <= 4.0 * std::numeric_limits<double>::epsilon() * expected)) {
            ++base_violations_;
        }
    }
}

double DriftAccumulator::max_mean_Nsq() const {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : nsq_) {
        if (s.count() > 0 && !(s.mean() <= best)) best = s.mean();
    }
    return best;
}

DriftReport DriftAccumulator::report() const {
    if (traces_ < kMinDriftTraces) {
        throw std::invalid_argument("drift: at least " + std::to_string(kMinDriftTraces) +
                                    " non-diverged traces are required, got " + std::to_string(traces_));
    }
    DriftReport r;
    r.c = params_.c;
    r.D = D_;
    r.cap = D_ / params_.c;
    r.traces = traces_;
    r.halving_checks = halving_checks_;
    r.halving_violations = halving_violations_;
    r.base_checks = base_checks_;
    r.base_violations = base_violations_;
    r.max_mean_Nsq = max_mean_Nsq();
    r.per_index.reserve(nsq_.size());
    for (std::size_t n = 0; n < nsq_.size(); ++n) {
        DriftIndexStats s;
        s.n = static_cast<std::int64_t>(n);
        s.count = nsq_[n].count();
        s.mean_Nsq = nsq_[n].mean();
        s.stderr_Nsq = nsq_[n].stderr_mean();
        const double rel = s.mean_Nsq > 0.0 ? s.stderr_Nsq / s.mean_Nsq : 0.0;
        s.cap_exceeded = s.mean_Nsq > r.cap * (1.0 + 3.0 * rel);
        if (n < excess_.size() && excess_[n].count() > 0) {
            s.mean_excess = excess_[n].mean();
            s.stderr_excess = excess_[n].stderr_mean();
            s.flagged = s.mean_excess > D_ + 3.0 * s.stderr_excess;
        } else {
            s.mean_excess = std::numeric_limits<double>::quiet_NaN();
            s.stderr_excess = std::numeric_limits<double>::quiet_NaN();
        }
        if (s.flagged) r.flagged.push_back(s.n);
        if (s.cap_exceeded) r.cap_exceeded.push_back(s.n);
        r.per_index.push_back(s);
    }
    return r;
}

DriftReport drift_estimate(const std::vector<Trace>& traces, const StrategyParams& params, const Moments& W) {
    DriftAccumulator acc(params, W);
    for (const auto& t : traces) acc.add(t);
    return acc.report();
}

// ------------------------------------------------------------ moment recursion

double moment_recursion_oracle(OraclePolicy policy, const Moments& A, const Moments& W, std::int64_t n) {
    if (n < 0) throw std::invalid_argument("moment_recursion_oracle: n must be >= 0");
    const double b2 =
        policy == OraclePolicy::zero_control ? A.mean * A.mean + A.variance : A.variance;
    double e = 0.0;
    for (std::int64_t i = 0; i < n; ++i) e = b2 * e + W.variance;
    return e;
}

double OracleCurve::stderr_of_mean(std::int64_t n, std::size_t trials) const {
    const auto i = static_cast<std::size_t>(n);
    const double var = fourth.at(i) - second.at(i) * second.at(i);
    return std::sqrt(std::max(0.0, var) / static_cast<double>(trials));
}

OracleCurve moment_recursion_curve(OraclePolicy policy, const DistributionSpec& A, const DistributionSpec& W,
                                   std::int64_t n_max) {
    if (n_max < 0) throw std::invalid_argument("moment_recursion_curve: n_max must be >= 0");
    const DistributionSpec B = policy == OraclePolicy::zero_control ? A : A.translated(-mean_of(A));
    const DistributionSpec V = W.translated(-mean_of(W));
    std::array<double, 5> eb{1.0}, ev{1.0};
    for (int k = 1; k <= 4; ++k) {
        eb[k] = raw_moment(B, k);
        ev[k] = raw_moment(V, k);
    }
    static constexpr double binom[5][5] = {
        {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};

    OracleCurve curve;
    curve.second.reserve(static_cast<std::size_t>(n_max) + 1);
    curve.fourth.reserve(static_cast<std::size_t>(n_max) + 1);
    std::array<double, 5> ex{1.0, 0.0, 0.0, 0.0, 0.0};
    for (std::int64_t n = 0;; ++n) {
        curve.second.push_back(ex[2]);
        curve.fourth.push_back(ex[4]);
        if (n == n_max) break;
        std::array<double, 5> next{1.0, 0.0, 0.0, 0.0, 0.0};
        for (int k = 1; k <= 4; ++k) {
            double s = 0.0;
            for (int j = 0; j <= k; ++j) s += binom[k][j] * eb[j] * ex[j] * ev[k - j];
            next[k] = s;
        }
        ex = next;
    }
    return curve;
}

// ----------------------------------------------------------------- containment

ContainmentReport& ContainmentReport::operator+=(const ContainmentReport& o) {
    normal_steps += o.normal_steps;
    unclamped_steps += o.unclamped_steps;
    interval_violations += o.interval_violations;
    clamped_interval_violations += o.clamped_interval_violations;
    control_error_violations += o.control_error_violations;
    emergency_steps += o.emergency_steps;
    emergency_violations += o.emergency_violations;
    for (auto n : o.first_violations) {
        if (first_violations.size() >= 10) break;
        first_violations.push_back(n);
    }
    return *this;
}

ContainmentReport check_containment(const Trace& trace) {
    ContainmentReport r;
    const StrategyParams& p = trace.params;
    const double mu_A = mean_of(trace.A);
    const double mu_W = mean_of(trace.W);
    auto note = [&](std::int64_t n) {
        if (r.first_violations.size() < 10) r.first_violations.push_back(n);
    };
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const TraceRow& row = trace.rows[i];
        const double prev_M = i == 0 ? p.M0 : trace.rows[i - 1].M;
        if (row.mode == Mode::emergency) {
            ++r.emergency_steps;
            if (!(row.U - mu_W == 0.0) || !(row.M == p.P * prev_M)) {
                ++r.emergency_violations;
                note(row.n);
            }
            continue;
        }
        ++r.normal_steps;
        const Cell cell = cell_of(row.symbol, prev_M, p);
        const bool clamped = p.M0 > std::max(std::abs(cell.a), std::abs(cell.b)) || p.M0 > (cell.b - cell.a) / 2.0;
        if (!clamped) ++r.unclamped_steps;

        const double e1 = row.rho * (row.M - 2.0 * row.I);
        const double e2 = row.rho * row.M;
        if (!(std::min(e1, e2) <= row.X && row.X <= std::max(e1, e2))) {
            if (clamped) {
                ++r.clamped_interval_violations;
            } else {
                ++r.interval_violations;
                note(row.n);
            }
        }
        const double lhs = std::abs(mu_A * row.X - (row.U - mu_W));
        const double rhs = std::abs(mu_A) * row.I;
        const double tol = 1e-12 * (std::abs(mu_A * row.X) + std::abs(row.U) + std::abs(mu_W) + rhs);
        if (!(lhs <= rhs + tol)) {
            ++r.control_error_violations;
            note(row.n);
        }
    }
    return r;
}

}  // namespace zoomctl
