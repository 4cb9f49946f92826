#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "doctest.h"
#include "zoomctl/analysis.hpp"
#include "zoomctl/harness.hpp"

using namespace zoomctl;

namespace {

const DistributionSpec kA = DistributionSpec::gaussian(1, 0.5);
const DistributionSpec kW = DistributionSpec::gaussian(0, 1);

StrategyParams stress() {
    StrategyParams p;
    p.L = 16;
    p.P = 2.0;
    p.M0 = 1.0;
    p.K = 2.0;
    p.c = 0.2;
    return p;
}

StrategyParams reference() {
    StrategyParams p;
    p.L = 100'000'000'000'000'000;
    p.P = 9.6e15;
    p.M0 = 4.0;
    p.K = 2.0;
    p.c = 0.2;
    return p;
}

// A hand-made trace from (X, M, I) triples; other fields stay at their defaults.
Trace manual_trace(const StrategyParams& p, const std::vector<std::array<double, 3>>& xs) {
    Trace t(p, kA, kW, 0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        TraceRow r;
        r.n = static_cast<std::int64_t>(i);
        r.X = xs[i][0];
        r.M = xs[i][1];
        r.I = xs[i][2];
        t.rows.push_back(r);
    }
    return t;
}

std::vector<Trace> stress_traces(std::size_t count, std::int64_t horizon) {
    std::vector<Trace> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(run_trial(kA, kW, stress(), horizon, derive_seed(7, i)));
    return out;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("freeze keeps M constant when the frozen state is already inside") {
    StrategyParams p = stress();
    const Trace t = manual_trace(p, {{0, 1, 1}, {0.5, 1, 1}, {0.7, 3, 1}});
    const FrozenTrace f = freeze(t, 1);
    REQUIRE(f.Mt.size() == 3);
    CHECK(f.Mt == std::vector<double>{1, 1, 1});
    CHECK(f.Xt == std::vector<double>{0, 0.5, 0.5});
}

TEST_CASE("freeze doubles the range until it covers the frozen state") {
    StrategyParams p = stress();
    const Trace t = manual_trace(p, {{0, 1, 1}, {10, 1, 0.25}, {-3, 5, 1}});
    const FrozenTrace f = freeze(t, 1);
    CHECK(f.n0 == 1);
    CHECK(f.Mt == std::vector<double>{1, 1, 2, 4, 8, 16, 16});
    CHECK(f.Xt == std::vector<double>{0, 10, 10, 10, 10, 10, 10});
    CHECK(f.It == std::vector<double>{1, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25});
    CHECK_THROWS_AS(freeze(t, 3), std::out_of_range);
    CHECK_THROWS_AS(freeze(t, -1), std::out_of_range);
}

TEST_CASE("freezing at n0 = 0 gives the zero state and the initial range") {
    const Trace t = run_trial(kA, kW, stress(), 100, 4);
    const FrozenTrace f = freeze(t, 0);
    for (double x : f.Xt) CHECK(x == 0.0);
    for (double m : f.Mt) CHECK(m == stress().M0);
}

TEST_CASE("tau and N on normal and emergency stretches") {
    FrozenTrace f;
    f.Xt = {0, 1, 5, 9, 17, 3};
    f.Mt = {1, 1, 2, 4, 8, 8};
    f.It = {1, 1, 1, 1, 1, 1};
    const DominatingSeq d = dominating_seq(f, 8.0, 2.0, 1.0);
    REQUIRE(d.size() == 6);
    CHECK(d.tau == std::vector<std::int64_t>{0, 1, 5, 5, 5, 5});
    CHECK(d.Q[0] == 3.0);
    CHECK(d.Q[5] == std::sqrt(64.0 + 8.0));
    CHECK(d.N[0] == d.Q[0]);
    CHECK(d.N[1] == d.Q[1]);
    CHECK(d.N[2] == d.Q[5] * 8);
    CHECK(d.N[3] == d.Q[5] * 4);
    CHECK(d.N[4] == d.Q[5] * 2);
    CHECK(d.N[5] == d.Q[5]);
    for (std::size_t n = 0; n < d.size(); ++n) {
        CHECK(d.tau[n] >= static_cast<std::int64_t>(n));
        CHECK(d.tau[static_cast<std::size_t>(d.tau[n])] == d.tau[n]);
    }
}

TEST_CASE("tau that never resolves is reported") {
    FrozenTrace f;
    f.Xt = {0, 50, 50};
    f.Mt = {1, 2, 4};
    f.It = {1, 1, 1};
    CHECK_THROWS_WITH_AS(dominating_seq(f, 2.0, 2.0, 1.0), doctest::Contains("after index 2"), std::runtime_error);
}

TEST_CASE("an all-normal trace has tau(n) = n and N = Q") {
    const Trace t = run_trial(kA, kW, reference(), 2000, 3);
    const DominatingSeq d = dominating_seq(t, 2.0);
    REQUIRE(d.size() == t.rows.size());
    for (std::size_t n = 0; n < d.size(); ++n) {
        CHECK(d.tau[n] == static_cast<std::int64_t>(n));
        CHECK(d.N[n] == d.Q[n]);
    }
}

TEST_CASE("the unfrozen dominating sequence drops a trailing emergency") {
    StrategyParams p = stress();
    Trace t = manual_trace(p, {{0, 1, 1}, {0, 2, 1}, {0, 4, 1}});
    t.rows[2].mode = Mode::emergency;
    CHECK(dominating_seq(t, 2.0).size() == 2);
}

TEST_CASE("domination holds at every step of coarse-quantizer traces") {
    std::size_t emergency_n0 = 0;
    for (const Trace& t : stress_traces(20, 600)) {
        std::vector<std::int64_t> n0s;
        for (const auto& r : t.rows) {
            n0s.push_back(r.n);
            if (r.mode == Mode::emergency) ++emergency_n0;
        }
        const DominationReport rep = check_domination(t, 2.0, n0s);
        CHECK(rep.checked == n0s.size());
        CHECK(rep.passed());
    }
    CHECK(emergency_n0 > 0);
}

TEST_CASE("a corrupted state breaks domination") {
    Trace t = run_trial(kA, kW, reference(), 50, 3);
    // A tracker far smaller than the state it claims to cover.
    t.rows[20].M = 1e-9;
    t.rows[20].I = 1e-9;
    const DominationReport rep = check_domination(t, 2.0, {0, 10, 20});
    CHECK(rep.checked == 3);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].n0 == 20);
}

TEST_CASE("feasibility margins and constants") {
    StrategyParams p;
    p.P = 10;
    p.L = 10'000;
    p.c = 0.2;
    p.K = 2;
    p.M0 = 4;
    const auto r = feasibility(kA, kW, p, 4.5);
    CHECK(r.margin_drift == doctest::Approx(0.8 - (0.25 + 2.5 * 0.002 + 4 * 1e-6)).epsilon(1e-12));
    CHECK(r.margin_drift == doctest::Approx(0.544996).epsilon(1e-9));
    CHECK(r.margin_K == doctest::Approx(0.6));
    CHECK(r.R == 15);
    CHECK(r.stability_limit == 0.75);
    CHECK_FALSE(r.ok);  // P = 10 is far too small for the epsilon bound
    CHECK(r.epsilon_ratio > 0.0);

    p.M0 = 1;
    const auto r1 = feasibility(kA, kW, p, 4.5);
    CHECK(r1.D == doctest::Approx(5.0));
    CHECK(r1.C == doctest::Approx(25.0));
    CHECK(theoretical_bound(p, moments(kW)) == doctest::Approx(25.0));
}

TEST_CASE("feasibility reports signed and absolute gain variants") {
    StrategyParams p;
    p.P = 10;
    p.L = 10'000;
    p.c = 0.2;
    p.K = 2;
    p.M0 = 4;
    const auto pos = feasibility(kA, kW, p, 4.5);
    const auto neg = feasibility(DistributionSpec::gaussian(-1, 0.5), kW, p, 4.5);
    CHECK(neg.margin_drift == pos.margin_drift);
    CHECK(neg.margin_K == pos.margin_K);
    CHECK(neg.margin_drift_literal > neg.margin_drift);
    CHECK(neg.margin_K_literal == doctest::Approx(2.6));
    CHECK(pos.margin_K_literal == doctest::Approx(0.6));
}

TEST_CASE("feasibility errors") {
    StrategyParams p = reference();
    CHECK_THROWS_AS(feasibility(DistributionSpec::gaussian(1, 1.1), kW, p, 4.5), NotStabilizable);
    CHECK_THROWS_WITH(feasibility(DistributionSpec::gaussian(1, 1.0), kW, p, 4.5),
                      doctest::Contains("not second-moment stabilizable"));
    CHECK_THROWS_AS(feasibility(kA, kW, p, 4.0), std::invalid_argument);
    p.L = 1;
    p.P = 100;
    const auto r = feasibility(kA, kW, p, 4.5);
    CHECK(r.margin_drift < 0.0);
    CHECK_FALSE(r.ok);
}

TEST_CASE("finer quantization never lowers the drift margin") {
    StrategyParams p = stress();
    double prev = -std::numeric_limits<double>::infinity();
    for (std::int64_t L : {1, 2, 3, 10, 100, 1000, 100000}) {
        p.L = L;
        const double m = feasibility(kA, kW, p, 4.5).margin_drift;
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("the epsilon bound decreases in P and vanishes as P grows") {
    const double m = 34.4624, l = 4.31644;
    double prev = std::numeric_limits<double>::infinity();
    for (double P = 100; P < 1e30; P *= 3) {
        const double e = epsilon_bound(P, 4.0, 4.5, m, l);
        CHECK(e > 0.0);
        CHECK(e < prev);
        prev = e;
    }
    CHECK(epsilon_bound(1e60, 4.0, 4.5, m, l) < 1e-12);
    CHECK_THROWS_WITH_AS(epsilon_bound(1.5, 1.0, 4.5, m, l), doctest::Contains("increase P or M0"), std::domain_error);
    CHECK_THROWS_AS(epsilon_bound(1e10, 4.0, 4.0, m, l), std::invalid_argument);
}

TEST_CASE("epsilon constant chain") {
    const auto k = epsilon_constants(4.5, 4.0, 34.4624, 4.31644);
    CHECK(k.C == doctest::Approx(std::pow(1 - std::pow(34.4624, -1 / 4.5), -4.5)));
    CHECK(k.C1 == doctest::Approx(std::pow(2, 4.5) * std::max(std::pow(2, 4.5), k.C)));
    CHECK(k.C2 == doctest::Approx(k.C1 * 34.4624));
    CHECK(k.C3 == doctest::Approx(k.C2 * (1 + std::pow(4.0, -4.5))));
    CHECK(k.C4 == doctest::Approx(8 * k.C3));
}

TEST_CASE("suggested parameters are feasible and minimal") {
    const Suggestion s = suggest_params(kA, kW, 4.5);
    CHECK(s.params.P == 9.6e15);
    CHECK(s.params.L == 94374778834904312);
    CHECK(s.report.R == 58);
    CHECK(s.report.ok);
    CHECK(s.report.epsilon_estimate < 0.05);
    CHECK(s.report.margin_drift > 0.0);
    CHECK(s.report.m_alpha == doctest::Approx(34.4624).epsilon(1e-5));
    // One unit lower in the second significant figure misses the target.
    CHECK(epsilon_bound(9.5e15, 4.0, 4.5, s.report.m_alpha, s.report.ell_alpha) >= 0.05);
    StrategyParams q = s.params;
    q.L -= 1;
    CHECK(feasibility(kA, kW, q, 4.5).margin_drift <= 0.0);
}

TEST_CASE("drift diagnostics on a coarse quantizer") {
    const auto traces = stress_traces(150, 400);
    const DriftReport r = drift_estimate(traces, stress(), moments(kW));
    CHECK(r.traces == 150);
    CHECK(r.D == doctest::Approx(2 + 3));
    CHECK(r.cap == doctest::Approx(25));
    CHECK(r.base_checks == 150);
    CHECK(r.base_violations == 0);
    CHECK(r.halving_checks > 0);
    CHECK(r.halving_violations == 0);
    REQUIRE(r.per_index.size() == 401);
    CHECK(r.per_index[0].mean_Nsq == doctest::Approx(3.0));
    CHECK(r.per_index[0].stderr_Nsq == 0.0);
}

TEST_CASE("drift needs at least 100 traces") {
    const auto traces = stress_traces(99, 50);
    CHECK_THROWS_WITH_AS(drift_estimate(traces, stress(), moments(kW)), doctest::Contains("at least 100"),
                         std::invalid_argument);
    DriftAccumulator acc(stress(), moments(kW));
    Trace diverged(stress(), kA, kW, 0);
    diverged.diverged = true;
    for (int i = 0; i < 200; ++i) acc.add(diverged);
    CHECK(acc.traces() == 0);
    CHECK_THROWS(acc.report());
}

TEST_CASE("second-moment recursion") {
    const Moments a = moments(kA), w = moments(kW);
    CHECK(moment_recursion_oracle(OraclePolicy::zero_control, a, w, 0) == 0.0);
    CHECK(moment_recursion_oracle(OraclePolicy::perfect_observation, a, w, 0) == 0.0);
    CHECK(moment_recursion_oracle(OraclePolicy::zero_control, a, w, 1) == 1.0);
    CHECK(moment_recursion_oracle(OraclePolicy::zero_control, a, w, 2) == 2.25);
    CHECK(moment_recursion_oracle(OraclePolicy::perfect_observation, a, w, 200) == doctest::Approx(4.0 / 3));
}

TEST_CASE("fourth-moment curve") {
    const OracleCurve zc = moment_recursion_curve(OraclePolicy::zero_control, kA, kW, 30);
    const OracleCurve po = moment_recursion_curve(OraclePolicy::perfect_observation, kA, kW, 30);
    const Moments a = moments(kA), w = moments(kW);
    for (std::int64_t n = 0; n <= 30; ++n) {
        CHECK(zc.second[n] == doctest::Approx(moment_recursion_oracle(OraclePolicy::zero_control, a, w, n)));
        CHECK(po.second[n] == doctest::Approx(moment_recursion_oracle(OraclePolicy::perfect_observation, a, w, n)));
    }
    CHECK(zc.fourth[0] == 0.0);
    CHECK(zc.fourth[1] == doctest::Approx(3.0));
    CHECK(zc.fourth[2] == doctest::Approx(18.5625));
    CHECK(zc.stderr_of_mean(1, 100) == doctest::Approx(std::sqrt(2.0 / 100)));
}

TEST_CASE("fourth-moment curve agrees with exhaustive enumeration of discrete laws") {
    const auto A = DistributionSpec::two_point(0.5, 0.3, 1.4);
    const auto W = DistributionSpec::two_point(-1.0, 0.6, 2.0);  // centered in the recursion
    const double muW = mean_of(W);
    const int depth = 5;
    for (OraclePolicy pol : {OraclePolicy::zero_control, OraclePolicy::perfect_observation}) {
        const double shift = pol == OraclePolicy::zero_control ? 0.0 : mean_of(A);
        std::vector<double> m2(depth + 1, 0.0), m4(depth + 1, 0.0);
        std::function<void(int, double, double)> walk = [&](int n, double x, double prob) {
            m2[n] += prob * x * x;
            m4[n] += prob * x * x * x * x;
            if (n == depth) return;
            for (auto [a, pa] : {std::pair{0.5, 0.3}, std::pair{1.4, 0.7}}) {
                for (auto [v, pw] : {std::pair{-1.0, 0.6}, std::pair{2.0, 0.4}}) {
                    walk(n + 1, (a - shift) * x + (v - muW), prob * pa * pw);
                }
            }
        };
        walk(0, 0.0, 1.0);
        const OracleCurve c = moment_recursion_curve(pol, A, W, depth);
        for (int n = 0; n <= depth; ++n) {
            CHECK(c.second[n] == doctest::Approx(m2[n]).epsilon(1e-12));
            CHECK(c.fourth[n] == doctest::Approx(m4[n]).epsilon(1e-12));
        }
    }
}

TEST_CASE("containment on coarse and fine quantizers") {
    ContainmentReport total;
    for (const Trace& t : stress_traces(30, 1000)) total += check_containment(t);
    CHECK(total.passed());
    CHECK(total.unclamped_steps > 0);
    CHECK(total.emergency_steps > 0);
    CHECK(total.normal_steps + total.emergency_steps == 30 * 1001);

    const ContainmentReport fine = check_containment(run_trial(kA, kW, reference(), 1000, 8));
    CHECK(fine.passed());
    CHECK(fine.normal_steps == 1001);
}

TEST_CASE("containment flags tampered rows") {
    const auto traces = stress_traces(30, 1000);
    const Trace* chosen = nullptr;
    std::size_t unclamped_row = 0, emergency_row = 0;
    for (const Trace& t : traces) {
        for (std::size_t i = 1; i < t.rows.size(); ++i) {
            const auto& r = t.rows[i];
            if (r.mode == Mode::emergency && emergency_row == 0) emergency_row = i;
            if (r.mode == Mode::normal && r.I > t.params.M0 && r.M - 2 * r.I > t.params.M0 && unclamped_row == 0) {
                unclamped_row = i;
            }
        }
        if (unclamped_row && emergency_row) {
            chosen = &t;
            break;
        }
        unclamped_row = emergency_row = 0;
    }
    REQUIRE(chosen != nullptr);
    Trace bad = *chosen;
    bad.rows[unclamped_row].X = bad.rows[unclamped_row].rho * (bad.rows[unclamped_row].M + 1.0);
    auto r = check_containment(bad);
    CHECK(r.interval_violations == 1);
    CHECK(r.first_violations.front() == bad.rows[unclamped_row].n);

    bad = *chosen;
    bad.rows[emergency_row].U = 0.5;
    r = check_containment(bad);
    CHECK(r.emergency_violations == 1);
    CHECK_FALSE(r.passed());
}

}
