#pragma once

// Closed-loop state machine for X_{n+1} = A_n X_n + W_n - U_n.
//
// At step n the encoder sees X_n and either quantizes it (normal mode,
// |X_n| <= P*M_{n-1}) or sends the emergency codeword. The controller sees only
// the symbol and keeps its own copy of the tracker (M, I, rho). Then A_n, W_n
// are drawn and the plant advances.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zoomctl/codec.hpp"
#include "zoomctl/stochastic_models.hpp"

namespace zoomctl {

enum class Mode : std::uint8_t { normal, emergency };

std::string to_string(Mode m);
std::optional<Mode> parse_mode(const std::string& s);

struct TrackerState {
    Mode mode = Mode::normal;
    double M = 0.0;
    double I = 0.0;
    int rho = 1;
    std::int64_t n = -1;  // step of the last update, -1 before step 0

    /// State before step 0: M = I = M0, rho = +1.
    static TrackerState initial(const StrategyParams& params);
};

/// Exact equality including the bit patterns of M and I.
bool bit_identical(const TrackerState& lhs, const TrackerState& rhs) noexcept;

struct EncoderStep {
    Codeword codeword;
    TrackerState tracker;
};

struct ControllerStep {
    double U;
    TrackerState tracker;
};

EncoderStep encoder_step(double x, const TrackerState& tracker, const StrategyParams& params);
ControllerStep controller_step(Codeword cw, const TrackerState& tracker, double mu_A, double mu_W,
                               const StrategyParams& params);

inline double plant_step(double x, double u, double a_draw, double w_draw) noexcept {
    return a_draw * x + w_draw - u;
}

/// |X| beyond this ends a trial as diverged.
inline constexpr double kDivergenceThreshold = 1e150;

struct TraceRow {
    std::int64_t n = 0;
    double X = 0.0;
    std::uint64_t symbol = 0;
    Mode mode = Mode::normal;
    double M = 0.0;
    double I = 0.0;
    int rho = 1;
    double U = 0.0;
    double A = 0.0;
    double W = 0.0;
    std::int64_t round_id = 0;
};

struct Trace {
    Trace(StrategyParams p, DistributionSpec a, DistributionSpec w, std::uint64_t s)
        : params(p), A(std::move(a)), W(std::move(w)), seed(s) {}

    std::vector<TraceRow> rows;
    StrategyParams params;
    DistributionSpec A;
    DistributionSpec W;
    std::uint64_t seed;
    bool diverged = false;
    std::optional<std::int64_t> tracker_mismatch;  // first step where the two trackers differed
};

/// Runs horizon plant steps from X_0 = 0; the trace holds rows n = 0..horizon
/// unless the state diverges first.
Trace run_trial(const DistributionSpec& A, const DistributionSpec& W, const StrategyParams& params,
                std::int64_t horizon, std::uint64_t seed);

/// Rebuilds the controller's tracker and action from the recorded symbols alone.
/// Returns the first row whose recorded M, I, rho, mode or U disagrees.
std::optional<std::int64_t> replay_controller(const std::vector<TraceRow>& rows, const StrategyParams& params,
                                              double mu_A, double mu_W);

inline constexpr const char* kTraceCsvHeader = "n,X,symbol,mode,M,I,rho,U,A,W,round_id";

/// Lines in `provenance` are written first, each prefixed with "# ".
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows,
                     const std::vector<std::string>& provenance = {});

/// Skips '#' lines; throws std::runtime_error with a line number on malformed input.
std::vector<TraceRow> read_trace_csv(std::istream& is);

}  // namespace zoomctl
