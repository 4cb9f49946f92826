#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include <boost/accumulators/accumulators.hpp>
#include <boost/accumulators/statistics/count.hpp>
#include <boost/accumulators/statistics/mean.hpp>
#include <boost/accumulators/statistics/stats.hpp>
#include <boost/accumulators/statistics/variance.hpp>

namespace zoomctl {

/// Streaming mean and sample variance.
class RunningStats {
public:
    void add(double x) { acc_(x); }

    std::size_t count() const { return boost::accumulators::count(acc_); }

    double mean() const {
        return count() == 0 ? std::numeric_limits<double>::quiet_NaN() : boost::accumulators::mean(acc_);
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    double variance() const {
        const auto n = static_cast<double>(count());
        if (n < 2) return 0.0;
        return boost::accumulators::variance(acc_) * n / (n - 1.0);
    }

    /// Standard error of the mean.
    double stderr_mean() const {
        const auto n = static_cast<double>(count());
        return n == 0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(variance() / n);
    }

private:
    boost::accumulators::accumulator_set<
        double, boost::accumulators::stats<boost::accumulators::tag::count, boost::accumulators::tag::mean,
                                           boost::accumulators::tag::variance>>
        acc_;
};

}  // namespace zoomctl
