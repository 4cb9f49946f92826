#pragma once

// Fixed-rate quantizer shared by encoder and controller.
//
// In normal mode the interval [-P*M_prev, P*M_prev] is cut into 2L cells of
// width P*M_prev/L, indexed 0..2L-1 from the left. Symbol 2L is the emergency
// codeword. Cells are half-open [a, b) except the rightmost, which is closed.
// Because 1/delta = L is an integer, 0 is always a cell endpoint and no cell
// straddles the origin.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace zoomctl {

struct StrategyParams {
    std::int64_t L = 1;  // 1/delta
    double P = 2.0;
    double M0 = 1.0;
    double K = 1.0;
    double c = 0.1;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    double delta() const noexcept { return 1.0 / static_cast<double>(L); }
    std::uint64_t num_symbols() const noexcept { return 2 * static_cast<std::uint64_t>(L) + 1; }
    std::uint64_t emergency_symbol() const noexcept { return 2 * static_cast<std::uint64_t>(L); }
};

/// Largest L accepted; keeps 2L+1 and all cell offsets inside int64.
inline constexpr std::int64_t kMaxCellsPerSide = std::int64_t{1} << 61;

struct Codeword {
    std::uint64_t symbol = 0;
    bool operator==(const Codeword&) const = default;
};

struct Cell {
    double a;
    double b;
};

/// Tracker values implied by one normal-mode symbol.
struct NormalUpdate {
    double M;
    double I;
    int rho;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ceil(log2(2L + 1)).
int rate_for_cells(std::int64_t L);
int rate(const StrategyParams& params);

/// Uniform partition of [-half_range, half_range] into 2L cells. The outer
/// endpoints are exactly +-half_range; interior boundaries are j*width.
class UniformPartition {
public:
    UniformPartition(double half_range, std::int64_t L);

    double half_range() const noexcept { return half_range_; }
    double width() const noexcept { return width_; }
    std::int64_t cells_per_side() const noexcept { return L_; }

    bool covers(double x) const noexcept;

    /// Cell index in [0, 2L) for x with |x| <= half_range.
    std::uint64_t index_of(double x) const;
    Cell cell(std::uint64_t index) const;

    /// M = max(M0, |a|, |b|), I = max(M0, (b - a)/2), rho = sign of the cell.
    NormalUpdate update(std::uint64_t index, double M0) const;

private:
    double boundary(std::int64_t j) const noexcept;

    double half_range_;
    double width_;
    std::int64_t L_;
};

Codeword encode_normal(double x, double M_prev, const StrategyParams& params);
Cell cell_of(std::uint64_t symbol, double M_prev, const StrategyParams& params);
NormalUpdate tracker_update_normal(std::uint64_t symbol, double M_prev, const StrategyParams& params);

/// Wire form of one symbol: an R-bit little-endian field in ceil(R/8) bytes.
struct WireSymbol {
    std::array<std::uint8_t, 8> bytes{};
    std::size_t size = 0;

    std::span<const std::uint8_t> view() const noexcept { return {bytes.data(), size}; }
};

WireSymbol to_wire(Codeword cw, const StrategyParams& params);

/// Throws ProtocolError on a wrong length, bits set above R, or an unused codeword.
Codeword from_wire(std::span<const std::uint8_t> bytes, const StrategyParams& params);

}  // namespace zoomctl
