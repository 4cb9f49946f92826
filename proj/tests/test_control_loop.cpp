#include <bit>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "zoomctl/control_loop.hpp"

using namespace zoomctl;

namespace {

StrategyParams small(double M0 = 0.1) {
    StrategyParams p;
    p.L = 2;
    p.P = 2.0;
    p.M0 = M0;
    p.K = 2.0;
    p.c = 0.2;
    return p;
}

TrackerState with_M(double M, double I = 0.1) {
    TrackerState t;
    t.M = M;
    t.I = I;
    return t;
}

StrategyParams stress() {
    StrategyParams p;
    p.L = 16;
    p.P = 2.0;
    p.M0 = 1.0;
    p.K = 2.0;
    p.c = 0.2;
    return p;
}

const DistributionSpec kA = DistributionSpec::gaussian(1, 0.5);
const DistributionSpec kW = DistributionSpec::gaussian(0, 1);

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

TEST_SUITE("control_loop") {

TEST_CASE("encoder step in normal and emergency mode") {
    const auto p = small();
    auto e = encoder_step(1.3, with_M(1.0), p);
    CHECK(e.codeword.symbol == 3);
    CHECK(e.tracker.mode == Mode::normal);
    CHECK(e.tracker.M == 2.0);
    CHECK(e.tracker.I == 0.5);
    CHECK(e.tracker.rho == 1);

    e = encoder_step(5.0, with_M(1.0, 0.37), p);
    CHECK(e.codeword.symbol == 4);
    CHECK(e.tracker.mode == Mode::emergency);
    CHECK(e.tracker.M == 2.0);
    CHECK(e.tracker.I == 0.37);

    e = encoder_step(-2.0, with_M(1.0), p);
    CHECK(e.codeword.symbol == 0);
    CHECK(e.tracker.mode == Mode::normal);

    // Large negative states escape too.
    e = encoder_step(-5.0, with_M(1.0), p);
    CHECK(e.codeword.symbol == 4);
    CHECK_THROWS(encoder_step(std::nan(""), with_M(1.0), p));
}

TEST_CASE("controller step") {
    const auto p = small();
    auto c = controller_step({3}, with_M(1.0), 1.0, 0.0, p);
    CHECK(c.U == 1.5);
    CHECK(c.tracker.M == 2.0);

    c = controller_step({4}, with_M(1.0, 0.3), 1.0, 0.0, p);
    CHECK(c.U == 0.0);
    CHECK(c.tracker.mode == Mode::emergency);
    CHECK(c.tracker.M == 2.0);
    CHECK(c.tracker.I == 0.3);

    c = controller_step({1}, with_M(1.0), 0.8, 0.0, p);
    CHECK(c.U == doctest::Approx(-0.4));

    // The disturbance mean is added to every action.
    CHECK(controller_step({4}, with_M(1.0), 1.0, 0.7, p).U == 0.7);
    CHECK(controller_step({3}, with_M(1.0), 1.0, 0.7, p).U == doctest::Approx(2.2));
    CHECK_THROWS_AS(controller_step({5}, with_M(1.0), 1.0, 0.0, p), ProtocolError);
}

TEST_CASE("encoder and controller agree on the tracker") {
    const auto p = small();
    for (double x : {-2.0, -1.2, -0.5, 0.0, 0.3, 1.0, 1.9, 2.0, 3.0, -7.0}) {
        const auto e = encoder_step(x, with_M(1.0), p);
        const auto c = controller_step(e.codeword, with_M(1.0), 1.0, 0.0, p);
        CHECK(bit_identical(e.tracker, c.tracker));
    }
}

TEST_CASE("plant step") {
    CHECK(plant_step(1, 0, 2, 0.5) == 2.5);
    CHECK(plant_step(0, 0, 123.0, -0.7) == -0.7);
    CHECK(plant_step(3, 3, 1, 0) == 0.0);
}

TEST_CASE("horizon zero gives only the initial row") {
    const Trace t = run_trial(kA, kW, stress(), 0, 1);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].n == 0);
    CHECK(t.rows[0].X == 0.0);
    CHECK(t.rows[0].mode == Mode::normal);
    CHECK_FALSE(t.diverged);
}

TEST_CASE("unit gain without disturbance keeps the state at zero") {
    const Trace t = run_trial(DistributionSpec::two_point(1, 1, 0), DistributionSpec::two_point(0, 1, 0), stress(),
                              500, 3);
    REQUIRE(t.rows.size() == 501);
    for (const auto& r : t.rows) {
        CHECK(r.X == 0.0);
        CHECK(r.mode == Mode::normal);
    }
}

TEST_CASE("trials are deterministic in the seed") {
    const Trace a = run_trial(kA, kW, stress(), 2000, 77);
    const Trace b = run_trial(kA, kW, stress(), 2000, 77);
    const Trace c = run_trial(kA, kW, stress(), 2000, 78);
    REQUIRE(a.rows.size() == b.rows.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(same_bits(a.rows[i].X, b.rows[i].X));
        CHECK(a.rows[i].symbol == b.rows[i].symbol);
        if (i < c.rows.size() && !same_bits(a.rows[i].X, c.rows[i].X)) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("trace invariants on a coarse quantizer") {
    const auto p = stress();
    const Trace t = run_trial(kA, kW, p, 5000, 12);
    REQUIRE_FALSE(t.diverged);
    CHECK_FALSE(t.tracker_mismatch.has_value());
    std::size_t emergencies = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        CHECK(r.symbol <= p.emergency_symbol());
        CHECK(r.M >= p.M0);
        CHECK(r.I >= p.M0);
        CHECK(r.I <= r.M);
        CHECK((r.mode == Mode::emergency) == (r.symbol == p.emergency_symbol()));
        const double M_prev = i == 0 ? p.M0 : t.rows[i - 1].M;
        CHECK((std::abs(r.X) <= p.P * M_prev) == (r.mode == Mode::normal));
        if (i > 0) {
            CHECK(r.round_id - t.rows[i - 1].round_id == (r.mode == Mode::normal ? 1 : 0));
            CHECK(plant_step(t.rows[i - 1].X, t.rows[i - 1].U, t.rows[i - 1].A, t.rows[i - 1].W) == r.X);
        }
        if (r.mode == Mode::emergency) {
            ++emergencies;
            CHECK(r.U == 0.0);
            CHECK(r.M == p.P * M_prev);
        }
    }
    CHECK(t.rows[0].round_id == 0);
    CHECK(emergencies > 0);
}

TEST_CASE("divergence truncates and flags the trace") {
    const Trace t = run_trial(DistributionSpec::two_point(10, 0.5, -10), kW, stress(),
                              1000, 5);
    CHECK(t.diverged);
    CHECK(t.rows.size() < 1001);
    CHECK(std::abs(t.rows.back().X) <= kDivergenceThreshold);
}

TEST_CASE("trace CSV round trip is bit-exact") {
    const Trace t = run_trial(kA, kW, stress(), 800, 9);
    std::stringstream ss;
    write_trace_csv(ss, t.rows, {"seed = 9", "note: a, b"});
    const std::string text = ss.str();
    CHECK(text.rfind("# seed = 9\n# note: a, b\n" + std::string(kTraceCsvHeader) + "\n", 0) == 0);
    const auto back = read_trace_csv(ss);
    REQUIRE(back.size() == t.rows.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        const auto& x = back[i];
        const auto& y = t.rows[i];
        CHECK(x.n == y.n);
        CHECK(same_bits(x.X, y.X));
        CHECK(x.symbol == y.symbol);
        CHECK(x.mode == y.mode);
        CHECK(same_bits(x.M, y.M));
        CHECK(same_bits(x.I, y.I));
        CHECK(x.rho == y.rho);
        CHECK(same_bits(x.U, y.U));
        CHECK(same_bits(x.A, y.A));
        CHECK(same_bits(x.W, y.W));
        CHECK(x.round_id == y.round_id);
    }
}

TEST_CASE("malformed trace CSV reports the line") {
    std::stringstream bad1(std::string(kTraceCsvHeader) + "\n0,0,2,normal,1,1,1,0,1,0\n");
    CHECK_THROWS_WITH(read_trace_csv(bad1), doctest::Contains("line 2"));
    std::stringstream bad2(std::string(kTraceCsvHeader) + "\n0,0,2,sideways,1,1,1,0,1,0,0\n");
    CHECK_THROWS_WITH(read_trace_csv(bad2), doctest::Contains("line 2"));
    std::stringstream bad3("n,X\n");
    CHECK_THROWS(read_trace_csv(bad3));
}

TEST_CASE("replaying the symbols reproduces the controller exactly") {
    const auto p = stress();
    const Trace t = run_trial(kA, kW, p, 3000, 21);
    CHECK_FALSE(replay_controller(t.rows, p, 1.0, 0.0).has_value());

    auto rows = t.rows;
    rows[5].M = std::nextafter(rows[5].M, 1e300);
    CHECK(replay_controller(rows, p, 1.0, 0.0) == 5);

    rows = t.rows;
    rows[100].U = -rows[100].U + 1.0;
    CHECK(replay_controller(rows, p, 1.0, 0.0) == 100);

    rows = t.rows;
    rows[42].symbol = p.emergency_symbol() + 1;
    CHECK(replay_controller(rows, p, 1.0, 0.0) == 42);

    // A wrong control mean shows up at the first normal step.
    CHECK(replay_controller(t.rows, p, 1.0, 0.25) == 0);
}

}
