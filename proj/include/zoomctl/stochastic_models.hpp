#pragma once

// Laws for the random gain A and the additive disturbance W, sampling from
// them, and the moment quantities the strategy and its analysis consume.

#include <cstdint>
#include <random>
#include <string>
#include <variant>

namespace zoomctl {

struct Gaussian {
    double mean;
    double stddev;
};

struct Uniform {
    double lo;
    double hi;
};

/// Takes value v1 with probability p and v2 with probability 1 - p.
struct TwoPoint {
    double v1;
    double p;
    double v2;
};

/// shift + scale * T where T is a standard Student-t with `dof` degrees of freedom.
struct StudentT {
    double dof;
    double scale;
    double shift;
};

class DistributionSpec {
public:
    using Law = std::variant<Gaussian, Uniform, TwoPoint, StudentT>;

    static DistributionSpec gaussian(double mean, double stddev);
    static DistributionSpec uniform(double lo, double hi);
    static DistributionSpec two_point(double v1, double p, double v2);
    static DistributionSpec student_t(double dof, double scale, double shift);

    const Law& law() const noexcept { return law_; }
    std::string kind() const;
    std::string describe() const;

    /// The same law translated by `offset` (Z + offset).
    DistributionSpec translated(double offset) const;

private:
    explicit DistributionSpec(Law law) : law_(law) {}
    Law law_;
};

/// Per-trial random source. Same seed, same stream.
class RandomState {
public:
    explicit RandomState(std::uint64_t seed) : engine_(seed) {}
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

double sample(const DistributionSpec& spec, RandomState& rng);

struct Moments {
    double mean;
    double variance;
};

double mean_of(const DistributionSpec& spec);
Moments moments(const DistributionSpec& spec);

/// E[Z^k] for k in 1..4.
double raw_moment(const DistributionSpec& spec, int k);

/// Relative tolerance of the adaptive quadrature used by abs_moment.
inline constexpr double kQuadratureRelTol = 1e-6;

/// E[(|Z| + shift)^alpha], closed form where one exists, quadrature otherwise.
double abs_moment(const DistributionSpec& spec, double alpha, double shift = 0.0);

/// Same quantity, always by numeric integration against the law.
double abs_moment_quadrature(const DistributionSpec& spec, double alpha, double shift = 0.0);

struct MomentSummary {
    double alpha;
    double mean;
    double stddev;
    double abs_moment_alpha;          // E|Z|^alpha
    double shifted_abs_moment_alpha;  // E(|Z| + |mean|)^alpha
};

MomentSummary summarize(const DistributionSpec& spec, double alpha);

/// m_alpha = max(2, E(|A| + |mu_A|)^alpha).
double m_alpha(const MomentSummary& a);

/// ell_alpha = E|W - mu_W|^alpha; the loop cancels mu_W, so the analysis sees the centered law.
double ell_alpha(const DistributionSpec& w, double alpha);

}  // namespace zoomctl
