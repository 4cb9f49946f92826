#include "zoomctl/stochastic_models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "zoomctl/format.hpp"

namespace zoomctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Standard Student-t raw moments E[T^j], j <= 4; requires dof > j.
double student_raw(double dof, int j) {
    switch (j) {
        case 0: return 1.0;
        case 1:
        case 3: return 0.0;
        case 2: return dof / (dof - 2.0);
        case 4: return 3.0 * dof * dof / ((dof - 2.0) * (dof - 4.0));
        default: throw std::invalid_argument("student_raw: order out of range");
    }
}

double gaussian_pdf(double z, double mean, double sd) {
    const double u = (z - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double student_pdf(double z, const StudentT& t) {
    const double u = (z - t.shift) / t.scale;
    const double log_norm = std::lgamma(0.5 * (t.dof + 1.0)) - std::lgamma(0.5 * t.dof) -
                            0.5 * std::log(t.dof * std::numbers::pi);
    return std::exp(log_norm - 0.5 * (t.dof + 1.0) * std::log1p(u * u / t.dof)) / t.scale;
}

void require_moment_args(double alpha, double shift) {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("abs_moment: alpha must be a finite real >= 1, got " +
                                    format_double(alpha));
    }
    if (!(shift >= 0.0) || !std::isfinite(shift)) {
        throw std::invalid_argument("abs_moment: shift must be a finite real >= 0, got " +
                                    format_double(shift));
    }
}

void require_student_moment(const StudentT& t, double alpha) {
    if (!(alpha < t.dof)) {
        throw std::domain_error("abs_moment: student_t has no finite moment of order alpha >= dof (alpha=" +
                                format_double(alpha) + ", dof=" + format_double(t.dof) + ")");
    }
}

// Integrates f over (-inf, inf) split at the given breakpoints; tails by exp-sinh,
// interior pieces by tanh-sinh. Throws when the error estimate misses the tolerance.
template <class F>
double integrate_real_line(F f, std::vector<double> breaks) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    constexpr double inner_tol = 1e-10;
    double total = 0.0;
    double total_err = 0.0;
    double l1 = 0.0;

    boost::math::quadrature::exp_sinh<double> tail;
    boost::math::quadrature::tanh_sinh<double> inner;
    const double inf = std::numeric_limits<double>::infinity();

    auto add = [&](double value, double err, double piece_l1) {
        total += value;
        total_err += err;
        l1 += piece_l1;
    };

    {
        double err = 0.0, piece_l1 = 0.0;
        double v = tail.integrate(f, -inf, breaks.front(), inner_tol, &err, &piece_l1);
        add(v, err, piece_l1);
    }
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        double err = 0.0, piece_l1 = 0.0;
        double v = inner.integrate(f, breaks[i], breaks[i + 1], inner_tol, &err, &piece_l1);
        add(v, err, piece_l1);
    }
    {
        double err = 0.0, piece_l1 = 0.0;
        double v = tail.integrate(f, breaks.back(), inf, inner_tol, &err, &piece_l1);
        add(v, err, piece_l1);
    }
    if (!(total_err <= kQuadratureRelTol * std::max(std::abs(total), 1e-300))) {
        throw std::runtime_error("abs_moment: quadrature did not reach relative tolerance 1e-6");
    }
    return total;
}

template <class F>
double integrate_interval(F f, std::vector<double> breaks) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    boost::math::quadrature::tanh_sinh<double> inner;
    double total = 0.0, total_err = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        double err = 0.0;
        total += inner.integrate(f, breaks[i], breaks[i + 1], 1e-10, &err);
        total_err += err;
    }
    if (!(total_err <= kQuadratureRelTol * std::max(std::abs(total), 1e-300))) {
        throw std::runtime_error("abs_moment: quadrature did not reach relative tolerance 1e-6");
    }
    return total;
}

}  // namespace

DistributionSpec DistributionSpec::gaussian(double mean, double stddev) {
    if (!std::isfinite(mean) || !(stddev > 0.0) || !std::isfinite(stddev)) {
        throw std::invalid_argument("gaussian: need finite mean and stddev > 0");
    }
    return DistributionSpec(Gaussian{mean, stddev});
}

DistributionSpec DistributionSpec::uniform(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
        throw std::invalid_argument("uniform: need finite lo < hi");
    }
    return DistributionSpec(Uniform{lo, hi});
}

DistributionSpec DistributionSpec::two_point(double v1, double p, double v2) {
    if (!std::isfinite(v1) || !std::isfinite(v2) || !(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("two_point: need finite values and 0 <= p <= 1");
    }
    return DistributionSpec(TwoPoint{v1, p, v2});
}

DistributionSpec DistributionSpec::student_t(double dof, double scale, double shift) {
    if (!(dof > 0.0) || !std::isfinite(dof) || !(scale > 0.0) || !std::isfinite(scale) ||
        !std::isfinite(shift)) {
        throw std::invalid_argument("student_t: need dof > 0, scale > 0, finite shift");
    }
    return DistributionSpec(StudentT{dof, scale, shift});
}

std::string DistributionSpec::kind() const {
    return std::visit(overloaded{
                          [](const Gaussian&) { return std::string("gaussian"); },
                          [](const Uniform&) { return std::string("uniform"); },
                          [](const TwoPoint&) { return std::string("two_point"); },
                          [](const StudentT&) { return std::string("student_t"); },
                      },
                      law_);
}

std::string DistributionSpec::describe() const {
    const auto f = format_double;
    return std::visit(
        overloaded{
            [&](const Gaussian& g) { return "gaussian(mean=" + f(g.mean) + ", stddev=" + f(g.stddev) + ")"; },
            [&](const Uniform& u) { return "uniform(lo=" + f(u.lo) + ", hi=" + f(u.hi) + ")"; },
            [&](const TwoPoint& t) {
                return "two_point(v1=" + f(t.v1) + ", p=" + f(t.p) + ", v2=" + f(t.v2) + ")";
            },
            [&](const StudentT& t) {
                return "student_t(dof=" + f(t.dof) + ", scale=" + f(t.scale) + ", shift=" + f(t.shift) + ")";
            },
        },
        law_);
}

DistributionSpec DistributionSpec::translated(double offset) const {
    return std::visit(overloaded{
                          [&](const Gaussian& g) { return gaussian(g.mean + offset, g.stddev); },
                          [&](const Uniform& u) { return uniform(u.lo + offset, u.hi + offset); },
                          [&](const TwoPoint& t) { return two_point(t.v1 + offset, t.p, t.v2 + offset); },
                          [&](const StudentT& t) { return student_t(t.dof, t.scale, t.shift + offset); },
                      },
                      law_);
}

double sample(const DistributionSpec& spec, RandomState& rng) {
    auto& eng = rng.engine();
    return std::visit(overloaded{
                          [&](const Gaussian& g) { return std::normal_distribution<double>(g.mean, g.stddev)(eng); },
                          [&](const Uniform& u) { return std::uniform_real_distribution<double>(u.lo, u.hi)(eng); },
                          [&](const TwoPoint& t) { return std::bernoulli_distribution(t.p)(eng) ? t.v1 : t.v2; },
                          [&](const StudentT& t) {
                              return t.shift + t.scale * std::student_t_distribution<double>(t.dof)(eng);
                          },
                      },
                      spec.law());
}

double mean_of(const DistributionSpec& spec) {
    return std::visit(overloaded{
                          [](const Gaussian& g) { return g.mean; },
                          [](const Uniform& u) { return 0.5 * (u.lo + u.hi); },
                          [](const TwoPoint& t) { return t.p * t.v1 + (1.0 - t.p) * t.v2; },
                          [](const StudentT& t) {
                              if (!(t.dof > 1.0)) {
                                  throw std::domain_error("moments: student_t mean undefined for dof <= 1");
                              }
                              return t.shift;
                          },
                      },
                      spec.law());
}

Moments moments(const DistributionSpec& spec) {
    const double mean = mean_of(spec);
    const double variance = std::visit(
        overloaded{
            [](const Gaussian& g) { return g.stddev * g.stddev; },
            [](const Uniform& u) { return (u.hi - u.lo) * (u.hi - u.lo) / 12.0; },
            [](const TwoPoint& t) { return t.p * (1.0 - t.p) * (t.v1 - t.v2) * (t.v1 - t.v2); },
            [](const StudentT& t) {
                if (!(t.dof > 2.0)) {
                    throw std::domain_error("moments: student_t variance undefined for dof <= 2");
                }
                return t.scale * t.scale * t.dof / (t.dof - 2.0);
            },
        },
        spec.law());
    return {mean, variance};
}

double raw_moment(const DistributionSpec& spec, int k) {
    if (k < 1 || k > 4) throw std::invalid_argument("raw_moment: order must be in 1..4");
    return std::visit(
        overloaded{
            [&](const Gaussian& g) {
                const double m = g.mean, v = g.stddev * g.stddev;
                switch (k) {
                    case 1: return m;
                    case 2: return m * m + v;
                    case 3: return m * m * m + 3.0 * m * v;
                    default: return m * m * m * m + 6.0 * m * m * v + 3.0 * v * v;
                }
            },
            [&](const Uniform& u) {
                return (std::pow(u.hi, k + 1) - std::pow(u.lo, k + 1)) / ((k + 1) * (u.hi - u.lo));
            },
            [&](const TwoPoint& t) { return t.p * std::pow(t.v1, k) + (1.0 - t.p) * std::pow(t.v2, k); },
            [&](const StudentT& t) {
                if (!(t.dof > k)) {
                    throw std::domain_error("raw_moment: student_t moment of order " + std::to_string(k) +
                                            " needs dof > " + std::to_string(k));
                }
                double sum = 0.0;
                for (int j = 0; j <= k; ++j) {
                    sum += binomial(k, j) * std::pow(t.scale, j) * student_raw(t.dof, j) *
                           std::pow(t.shift, k - j);
                }
                return sum;
            },
        },
        spec.law());
}

double abs_moment(const DistributionSpec& spec, double alpha, double shift) {
    require_moment_args(alpha, shift);
    return std::visit(
        overloaded{
            [&](const Gaussian& g) {
                if (g.mean == 0.0 && shift == 0.0) {
                    return std::pow(g.stddev, alpha) * std::pow(2.0, alpha / 2.0) *
                           std::tgamma((alpha + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
                }
                return abs_moment_quadrature(spec, alpha, shift);
            },
            [&](const Uniform& u) {
                const double a1 = alpha + 1.0;
                double acc = 0.0;
                if (u.hi > 0.0) {
                    const double from = std::max(u.lo, 0.0);
                    acc += (std::pow(u.hi + shift, a1) - std::pow(from + shift, a1)) / a1;
                }
                if (u.lo < 0.0) {
                    const double to = -std::min(u.hi, 0.0);
                    acc += (std::pow(-u.lo + shift, a1) - std::pow(to + shift, a1)) / a1;
                }
                return acc / (u.hi - u.lo);
            },
            [&](const TwoPoint&) { return abs_moment_quadrature(spec, alpha, shift); },
            [&](const StudentT& t) {
                require_student_moment(t, alpha);
                if (t.shift == 0.0 && shift == 0.0) {
                    const double log_v = alpha * std::log(t.scale) + 0.5 * alpha * std::log(t.dof) +
                                         std::lgamma(0.5 * (alpha + 1.0)) +
                                         std::lgamma(0.5 * (t.dof - alpha)) - std::lgamma(0.5 * t.dof) -
                                         0.5 * std::log(std::numbers::pi);
                    return std::exp(log_v);
                }
                return abs_moment_quadrature(spec, alpha, shift);
            },
        },
        spec.law());
}

double abs_moment_quadrature(const DistributionSpec& spec, double alpha, double shift) {
    require_moment_args(alpha, shift);
    auto weight = [&](double z) { return std::pow(std::abs(z) + shift, alpha); };
    // At +-inf the density underflows to 0 while the weight overflows.
    auto weighted = [&](double z, double density) { return density == 0.0 ? 0.0 : weight(z) * density; };
    return std::visit(
        overloaded{
            [&](const Gaussian& g) {
                return integrate_real_line([&](double z) { return weighted(z, gaussian_pdf(z, g.mean, g.stddev)); },
                                           {0.0, g.mean});
            },
            [&](const Uniform& u) {
                std::vector<double> breaks{u.lo, u.hi};
                if (u.lo < 0.0 && u.hi > 0.0) breaks.push_back(0.0);
                return integrate_interval([&](double z) { return weight(z); }, breaks) / (u.hi - u.lo);
            },
            // A discrete law integrates to its weighted sum.
            [&](const TwoPoint& t) { return t.p * weight(t.v1) + (1.0 - t.p) * weight(t.v2); },
            [&](const StudentT& t) {
                require_student_moment(t, alpha);
                return integrate_real_line([&](double z) { return weighted(z, student_pdf(z, t)); },
                                           {0.0, t.shift});
            },
        },
        spec.law());
}

MomentSummary summarize(const DistributionSpec& spec, double alpha) {
    const Moments m = moments(spec);
    MomentSummary s{};
    s.alpha = alpha;
    s.mean = m.mean;
    s.stddev = std::sqrt(m.variance);
    s.abs_moment_alpha = abs_moment(spec, alpha, 0.0);
    s.shifted_abs_moment_alpha = abs_moment(spec, alpha, std::abs(m.mean));
    return s;
}

double m_alpha(const MomentSummary& a) { return std::max(2.0, a.shifted_abs_moment_alpha); }

double ell_alpha(const DistributionSpec& w, double alpha) {
    return abs_moment(w.translated(-mean_of(w)), alpha, 0.0);
}

}  // namespace zoomctl
