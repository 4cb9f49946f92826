#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include "doctest.h"
#include "zoomctl/running_stats.hpp"
#include "zoomctl/stochastic_models.hpp"

using namespace zoomctl;

namespace {

// E|Z|^alpha for Z ~ N(mu, sigma^2) through the confluent hypergeometric function.
double gaussian_abs_moment(double mu, double sigma, double alpha) {
    const double lead = std::pow(sigma, alpha) * std::pow(2.0, alpha / 2) *
                        boost::math::tgamma((alpha + 1) / 2) / std::sqrt(std::numbers::pi);
    return lead * boost::math::hypergeometric_1F1(-alpha / 2, 0.5, -mu * mu / (2 * sigma * sigma));
}

}  // namespace

TEST_SUITE("stochastic_models") {

TEST_CASE("a degenerate two-point law always returns its atom") {
    RandomState rng(11);
    const auto spec = DistributionSpec::two_point(1.0, 1.0, 42.0);
    for (int i = 0; i < 1000; ++i) CHECK(sample(spec, rng) == 1.0);
}

TEST_CASE("sampling is reproducible for a fixed seed") {
    for (const auto& spec : {DistributionSpec::gaussian(0, 1), DistributionSpec::uniform(-1, 1),
                             DistributionSpec::two_point(-1, 0.3, 2), DistributionSpec::student_t(5, 1, 0)}) {
        RandomState r1(99), r2(99);
        for (int i = 0; i < 100; ++i) CHECK(sample(spec, r1) == sample(spec, r2));
    }
}

TEST_CASE("uniform(-1,1) sample mean is within 0.01 of 0 over a million draws") {
    RandomState rng(5);
    const auto spec = DistributionSpec::uniform(-1, 1);
    double sum = 0.0;
    for (int i = 0; i < 1'000'000; ++i) sum += sample(spec, rng);
    CHECK(std::abs(sum / 1e6) < 0.01);
}

TEST_CASE("closed-form means and variances") {
    auto m = moments(DistributionSpec::uniform(-1, 1));
    CHECK(m.mean == doctest::Approx(0.0));
    CHECK(m.variance == doctest::Approx(1.0 / 3));
    m = moments(DistributionSpec::gaussian(1, 0.5));
    CHECK(m.mean == 1.0);
    CHECK(m.variance == 0.25);
    m = moments(DistributionSpec::two_point(0, 0.5, 2));
    CHECK(m.mean == doctest::Approx(1.0));
    CHECK(m.variance == doctest::Approx(1.0));
    m = moments(DistributionSpec::student_t(5, 0.3872983346207417, 1));
    CHECK(m.mean == 1.0);
    CHECK(m.variance == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("student_t without a finite variance is rejected") {
    CHECK_THROWS(moments(DistributionSpec::student_t(2, 1, 0)));
    CHECK_THROWS(moments(DistributionSpec::student_t(1.5, 1, 0)));
}

TEST_CASE("absolute moments") {
    CHECK(abs_moment(DistributionSpec::gaussian(0, 1), 4) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(abs_moment_quadrature(DistributionSpec::gaussian(0, 1), 4) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(abs_moment(DistributionSpec::two_point(-1, 0.5, 1), 4) == doctest::Approx(1.0));
}

TEST_CASE("gaussian absolute moment matches the hypergeometric closed form") {
    for (double alpha : {1.0, 2.5, 4.5, 6.0}) {
        for (auto [mu, sigma] : {std::pair{0.0, 1.0}, std::pair{1.0, 0.5}, std::pair{-2.0, 1.5}}) {
            const double expected = gaussian_abs_moment(mu, sigma, alpha);
            CAPTURE(alpha);
            CAPTURE(mu);
            CHECK(abs_moment(DistributionSpec::gaussian(mu, sigma), alpha) ==
                  doctest::Approx(expected).epsilon(1e-6));
            CHECK(abs_moment_quadrature(DistributionSpec::gaussian(mu, sigma), alpha) ==
                  doctest::Approx(expected).epsilon(1e-5));
        }
    }
}

TEST_CASE("shifted gaussian moment agrees with a 1e7-sample Monte Carlo estimate within 1%") {
    const auto spec = DistributionSpec::gaussian(1, 0.5);
    std::mt19937_64 eng(2024);
    std::normal_distribution<double> z(1.0, 0.5);
    double sum = 0.0;
    const int draws = 10'000'000;
    for (int i = 0; i < draws; ++i) sum += std::pow(std::abs(z(eng)) + 1.0, 4.5);
    const double mc = sum / draws;
    CHECK(std::abs(abs_moment(spec, 4.5, 1.0) / mc - 1.0) < 0.01);
}

TEST_CASE("quadrature second moment equals mean^2 + variance for every law") {
    for (const auto& spec : {DistributionSpec::gaussian(1, 0.5), DistributionSpec::uniform(-0.5, 2),
                             DistributionSpec::two_point(-1, 0.25, 3), DistributionSpec::student_t(5, 0.7, 1)}) {
        const auto m = moments(spec);
        CAPTURE(spec.describe());
        CHECK(abs_moment_quadrature(spec, 2.0) == doctest::Approx(m.mean * m.mean + m.variance).epsilon(1e-6));
    }
}

TEST_CASE("empirical absolute moments are within 3 standard errors") {
    for (const auto& spec : {DistributionSpec::gaussian(1, 0.5), DistributionSpec::uniform(-1, 2)}) {
        for (double alpha : {1.0, 3.0, 4.0}) {
            RandomState rng(17);
            RunningStats s;
            for (int i = 0; i < 1'000'000; ++i) s.add(std::pow(std::abs(sample(spec, rng)), alpha));
            CAPTURE(spec.describe());
            CAPTURE(alpha);
            CHECK(std::abs(s.mean() - abs_moment(spec, alpha)) <= 3 * s.stderr_mean());
        }
    }
}

TEST_CASE("moment summary satisfies Jensen's inequality") {
    for (const auto& spec : {DistributionSpec::gaussian(1, 0.5), DistributionSpec::gaussian(-0.3, 2),
                             DistributionSpec::uniform(-1, 3), DistributionSpec::two_point(-2, 0.4, 1),
                             DistributionSpec::student_t(6, 0.5, 1)}) {
        const auto s = summarize(spec, 4.5);
        CAPTURE(spec.describe());
        CHECK(s.stddev >= 0.0);
        CHECK(s.abs_moment_alpha >= std::pow(std::abs(s.mean), 4.5) * (1 - 1e-9));
        CHECK(s.shifted_abs_moment_alpha >= s.abs_moment_alpha);
    }
}

TEST_CASE("reference system constants") {
    const auto A = DistributionSpec::gaussian(1, 0.5);
    const auto W = DistributionSpec::gaussian(0, 1);
    CHECK(m_alpha(summarize(A, 4.5)) == doctest::Approx(34.4624).epsilon(1e-5));
    CHECK(ell_alpha(W, 4.5) == doctest::Approx(4.31644).epsilon(1e-5));
    // A small gain keeps m_alpha at its floor of 2.
    CHECK(m_alpha(summarize(DistributionSpec::uniform(-0.1, 0.1), 4.5)) == 2.0);
    // The disturbance's mean does not enter ell_alpha.
    CHECK(ell_alpha(DistributionSpec::gaussian(3, 1), 4.5) == doctest::Approx(ell_alpha(W, 4.5)).epsilon(1e-6));
}

TEST_CASE("student_t absolute moments exist only below the degrees of freedom") {
    const auto t5 = DistributionSpec::student_t(5, 1, 0);
    CHECK(std::isfinite(abs_moment(t5, 4.5)));
    CHECK_THROWS_WITH_AS(abs_moment(t5, 5.0), doctest::Contains("dof"), std::domain_error);
    CHECK_THROWS(abs_moment(t5, 6.0));
    // Second moment of a standard t with 5 dof is 5/3.
    CHECK(abs_moment(t5, 2.0) == doctest::Approx(5.0 / 3).epsilon(1e-6));
}

TEST_CASE("invalid law parameters are rejected") {
    CHECK_THROWS_AS(DistributionSpec::gaussian(0, -1), std::invalid_argument);
    CHECK_THROWS_AS(DistributionSpec::uniform(1, 1), std::invalid_argument);
    CHECK_THROWS_AS(DistributionSpec::two_point(0, 1.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(DistributionSpec::student_t(0, 1, 0), std::invalid_argument);
}

}
