#include "zoomctl/control_loop.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "zoomctl/format.hpp"

namespace zoomctl {

std::string to_string(Mode m) { return m == Mode::normal ? "normal" : "emergency"; }

std::optional<Mode> parse_mode(const std::string& s) {
    if (s == "normal") return Mode::normal;
    if (s == "emergency") return Mode::emergency;
    return std::nullopt;
}

TrackerState TrackerState::initial(const StrategyParams& params) {
    TrackerState t;
    t.mode = Mode::normal;
    t.M = params.M0;
    t.I = params.M0;
    t.rho = 1;
    t.n = -1;
    return t;
}

bool bit_identical(const TrackerState& lhs, const TrackerState& rhs) noexcept {
    return lhs.mode == rhs.mode && lhs.rho == rhs.rho && lhs.n == rhs.n &&
           std::bit_cast<std::uint64_t>(lhs.M) == std::bit_cast<std::uint64_t>(rhs.M) &&
           std::bit_cast<std::uint64_t>(lhs.I) == std::bit_cast<std::uint64_t>(rhs.I);
}

namespace {

TrackerState after_normal(const TrackerState& prev, const NormalUpdate& u) {
    TrackerState t;
    t.mode = Mode::normal;
    t.M = u.M;
    t.I = u.I;
    t.rho = u.rho;
    t.n = prev.n + 1;
    return t;
}

// M grows by P; I and rho are frozen for the duration of the emergency.
TrackerState after_emergency(const TrackerState& prev, const StrategyParams& params) {
    TrackerState t = prev;
    t.mode = Mode::emergency;
    t.M = params.P * prev.M;
    t.n = prev.n + 1;
    return t;
}

}  // namespace

EncoderStep encoder_step(double x, const TrackerState& tracker, const StrategyParams& params) {
    if (!std::isfinite(x)) throw std::domain_error("encoder_step: non-finite state");
    const UniformPartition part(params.P * tracker.M, params.L);
    if (part.covers(x)) {
        const std::uint64_t s = part.index_of(x);
        return {{s}, after_normal(tracker, part.update(s, params.M0))};
    }
    return {{params.emergency_symbol()}, after_emergency(tracker, params)};
}

ControllerStep controller_step(Codeword cw, const TrackerState& tracker, double mu_A, double mu_W,
                               const StrategyParams& params) {
    if (cw.symbol > params.emergency_symbol()) {
        throw ProtocolError("controller_step: symbol " + std::to_string(cw.symbol) + " is not a codeword");
    }
    if (cw.symbol == params.emergency_symbol()) {
        return {0.0 + mu_W, after_emergency(tracker, params)};
    }
    const NormalUpdate u = tracker_update_normal(cw.symbol, tracker.M, params);
    const double U = u.rho * mu_A * (u.M - u.I) + mu_W;
    return {U, after_normal(tracker, u)};
}

Trace run_trial(const DistributionSpec& A, const DistributionSpec& W, const StrategyParams& params,
                std::int64_t horizon, std::uint64_t seed) {
    params.validate();
    if (horizon < 0) throw std::invalid_argument("run_trial: horizon must be >= 0");

    const double mu_A = mean_of(A);
    const double mu_W = mean_of(W);

    Trace trace(params, A, W, seed);
    trace.rows.reserve(static_cast<std::size_t>(horizon) + 1);
    RandomState rng(seed);

    TrackerState enc = TrackerState::initial(params);
    TrackerState ctl = enc;
    std::int64_t round = -1;
    double x = 0.0;

    for (std::int64_t n = 0; n <= horizon; ++n) {
        if (!std::isfinite(x) || std::abs(x) > kDivergenceThreshold) {
            trace.diverged = true;
            break;
        }
        const EncoderStep e = encoder_step(x, enc, params);
        const WireSymbol wire = to_wire(e.codeword, params);
        const ControllerStep c = controller_step(from_wire(wire.view(), params), ctl, mu_A, mu_W, params);
        if (!trace.tracker_mismatch && !bit_identical(e.tracker, c.tracker)) trace.tracker_mismatch = n;
        enc = e.tracker;
        ctl = c.tracker;
        if (ctl.mode == Mode::normal) ++round;

        const double a = sample(A, rng);
        const double w = sample(W, rng);
        trace.rows.push_back({n, x, e.codeword.symbol, ctl.mode, ctl.M, ctl.I, ctl.rho, c.U, a, w, round});
        x = plant_step(x, c.U, a, w);
    }
    return trace;
}

std::optional<std::int64_t> replay_controller(const std::vector<TraceRow>& rows, const StrategyParams& params,
                                              double mu_A, double mu_W) {
    TrackerState ctl = TrackerState::initial(params);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const TraceRow& r = rows[i];
        if (r.symbol > params.emergency_symbol()) return r.n;
        const ControllerStep c = controller_step({r.symbol}, ctl, mu_A, mu_W, params);
        ctl = c.tracker;
        const bool same = ctl.mode == r.mode && ctl.rho == r.rho &&
                          std::bit_cast<std::uint64_t>(ctl.M) == std::bit_cast<std::uint64_t>(r.M) &&
                          std::bit_cast<std::uint64_t>(ctl.I) == std::bit_cast<std::uint64_t>(r.I) &&
                          std::bit_cast<std::uint64_t>(c.U) == std::bit_cast<std::uint64_t>(r.U);
        if (!same) return r.n;
    }
    return std::nullopt;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows, const std::vector<std::string>& provenance) {
    for (const auto& line : provenance) os << "# " << line << '\n';
    os << kTraceCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.n << ',' << format_double(r.X) << ',' << r.symbol << ',' << to_string(r.mode) << ','
           << format_double(r.M) << ',' << format_double(r.I) << ',' << r.rho << ',' << format_double(r.U) << ','
           << format_double(r.A) << ',' << format_double(r.W) << ',' << r.round_id << '\n';
    }
}

std::vector<TraceRow> read_trace_csv(std::istream& is) {
    std::vector<TraceRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error("trace csv line " + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (line != kTraceCsvHeader) fail("expected header '" + std::string(kTraceCsvHeader) + "'");
            header_seen = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 11) fail("expected 11 fields, got " + std::to_string(f.size()));

        TraceRow r;
        auto num = [&](const std::string& s, const char* name) {
            auto v = parse_double(s);
            if (!v) fail(std::string("bad ") + name + " '" + s + "'");
            return *v;
        };
        auto n = parse_integer<std::int64_t>(f[0]);
        auto sym = parse_integer<std::uint64_t>(f[2]);
        auto mode = parse_mode(f[3]);
        auto rho = parse_integer<int>(f[6]);
        auto round = parse_integer<std::int64_t>(f[10]);
        if (!n) fail("bad n '" + f[0] + "'");
        if (!sym) fail("bad symbol '" + f[2] + "'");
        if (!mode) fail("bad mode '" + f[3] + "'");
        if (!rho || (*rho != 1 && *rho != -1)) fail("bad rho '" + f[6] + "'");
        if (!round) fail("bad round_id '" + f[10] + "'");
        r.n = *n;
        r.X = num(f[1], "X");
        r.symbol = *sym;
        r.mode = *mode;
        r.M = num(f[4], "M");
        r.I = num(f[5], "I");
        r.rho = *rho;
        r.U = num(f[7], "U");
        r.A = num(f[8], "A");
        r.W = num(f[9], "W");
        r.round_id = *round;
        rows.push_back(r);
    }
    if (!header_seen) throw std::runtime_error("trace csv: missing header");
    return rows;
}

}  // namespace zoomctl
