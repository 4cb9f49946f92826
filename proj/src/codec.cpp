#include "zoomctl/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "zoomctl/format.hpp"

namespace zoomctl {

void StrategyParams::validate() const {
    if (L < 1 || L > kMaxCellsPerSide) {
        throw std::invalid_argument("strategy: L must be an integer in [1, 2^61], got " + std::to_string(L));
    }
    if (!(P > 1.0) || !std::isfinite(P)) {
        throw std::invalid_argument("strategy: P must be a finite real > 1, got " + format_double(P));
    }
    if (!(M0 > 0.0) || !std::isfinite(M0)) {
        throw std::invalid_argument("strategy: M0 must be a finite real > 0, got " + format_double(M0));
    }
    if (!(K > 0.0) || !std::isfinite(K)) {
        throw std::invalid_argument("strategy: K must be a finite real > 0, got " + format_double(K));
    }
    if (!(c > 0.0 && c < 0.75)) {
        throw std::invalid_argument("strategy: c must lie in (0, 3/4), got " + format_double(c));
    }
}

int rate_for_cells(std::int64_t L) {
    if (L < 1) throw std::invalid_argument("rate: L must be >= 1");
    // 2L+1 is odd and > 2, so ceil(log2(2L+1)) == bit_width(2L).
    return static_cast<int>(std::bit_width(2 * static_cast<std::uint64_t>(L)));
}

int rate(const StrategyParams& params) { return rate_for_cells(params.L); }

UniformPartition::UniformPartition(double half_range, std::int64_t L)
    : half_range_(half_range), width_(half_range / static_cast<double>(L)), L_(L) {
    if (!(half_range > 0.0) || !std::isfinite(half_range)) {
        throw std::invalid_argument("partition: half range must be finite and positive");
    }
    if (L < 1 || L > kMaxCellsPerSide) throw std::invalid_argument("partition: L out of range");
}

bool UniformPartition::covers(double x) const noexcept { return std::abs(x) <= half_range_; }

double UniformPartition::boundary(std::int64_t j) const noexcept {
    if (j <= -L_) return -half_range_;
    if (j >= L_) return half_range_;
    return static_cast<double>(j) * width_;
}

std::uint64_t UniformPartition::index_of(double x) const {
    if (!covers(x)) {
        throw std::domain_error("encode_normal: |x| = " + format_double(std::abs(x)) +
                                " exceeds the partition half range " + format_double(half_range_));
    }
    const double guess = std::floor(x / width_);
    std::int64_t k = 0;
    if (guess <= -static_cast<double>(L_)) {
        k = -L_;
    } else if (guess >= static_cast<double>(L_)) {
        k = L_ - 1;
    } else {
        k = std::clamp(static_cast<std::int64_t>(guess), -L_, L_ - 1);
    }
    // Settle rounding in x / width so that boundary(k) <= x < boundary(k + 1).
    while (k > -L_ && x < boundary(k)) --k;
    while (k < L_ - 1 && x >= boundary(k + 1)) ++k;
    return static_cast<std::uint64_t>(k + L_);
}

Cell UniformPartition::cell(std::uint64_t index) const {
    if (index >= 2 * static_cast<std::uint64_t>(L_)) {
        throw std::invalid_argument("cell_of: symbol " + std::to_string(index) +
                                    " is the emergency codeword or unused; it has no cell");
    }
    const auto k = static_cast<std::int64_t>(index) - L_;
    return {boundary(k), boundary(k + 1)};
}

NormalUpdate UniformPartition::update(std::uint64_t index, double M0) const {
    const Cell c = cell(index);
    const auto k = static_cast<std::int64_t>(index) - L_;
    NormalUpdate u{};
    u.M = std::max({M0, std::abs(c.a), std::abs(c.b)});
    u.I = std::max(M0, (c.b - c.a) / 2.0);
    u.rho = k >= 0 ? 1 : -1;
    return u;
}

Codeword encode_normal(double x, double M_prev, const StrategyParams& params) {
    return {UniformPartition(params.P * M_prev, params.L).index_of(x)};
}

Cell cell_of(std::uint64_t symbol, double M_prev, const StrategyParams& params) {
    return UniformPartition(params.P * M_prev, params.L).cell(symbol);
}

NormalUpdate tracker_update_normal(std::uint64_t symbol, double M_prev, const StrategyParams& params) {
    return UniformPartition(params.P * M_prev, params.L).update(symbol, params.M0);
}

WireSymbol to_wire(Codeword cw, const StrategyParams& params) {
    if (cw.symbol > params.emergency_symbol()) {
        throw ProtocolError("to_wire: symbol " + std::to_string(cw.symbol) + " is outside [0, 2L]");
    }
    const int r = rate(params);
    WireSymbol w;
    w.size = static_cast<std::size_t>((r + 7) / 8);
    for (std::size_t i = 0; i < w.size; ++i) {
        w.bytes[i] = static_cast<std::uint8_t>((cw.symbol >> (8 * i)) & 0xFFu);
    }
    return w;
}

Codeword from_wire(std::span<const std::uint8_t> bytes, const StrategyParams& params) {
    const int r = rate(params);
    const auto expected = static_cast<std::size_t>((r + 7) / 8);
    if (bytes.size() != expected) {
        throw ProtocolError("from_wire: expected " + std::to_string(expected) + " bytes, got " +
                            std::to_string(bytes.size()));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    if (r < 64 && (v >> r) != 0) throw ProtocolError("from_wire: bits set above the R-bit field");
    if (v > params.emergency_symbol()) {
        throw ProtocolError("from_wire: unused codeword " + std::to_string(v));
    }
    return {v};
}

}  // namespace zoomctl
