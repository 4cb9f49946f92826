#include "zoomctl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "zoomctl/analysis.hpp"
#include "zoomctl/format.hpp"
#include "zoomctl/running_stats.hpp"

namespace zoomctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_adaptive(const Policy& p) { return std::holds_alternative<AdaptiveFixedRate>(p); }

}  // namespace

std::string policy_name(const Policy& policy) {
    return std::visit(overloaded{[](const AdaptiveFixedRate&) { return std::string("adaptive_fixed_rate"); },
                                 [](const StaticQuantizer&) { return std::string("static_quantizer"); },
                                 [](const PerfectObservation&) { return std::string("perfect_observation"); },
                                 [](const ZeroControl&) { return std::string("zero_control"); }},
                      policy);
}

std::optional<Policy> parse_policy(const std::string& name) {
    if (name == "adaptive_fixed_rate") return Policy{AdaptiveFixedRate{}};
    if (name == "static_quantizer") return Policy{StaticQuantizer{}};
    if (name == "perfect_observation") return Policy{PerfectObservation{}};
    if (name == "zero_control") return Policy{ZeroControl{}};
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    if (horizon < 1) throw std::invalid_argument("experiment: horizon must be >= 1");
    if (trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
    if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("experiment: split must lie in (0, 1)");
    if (!std::isfinite(alpha)) throw std::invalid_argument("experiment: alpha must be finite");
    params.validate();
    if (const auto* s = std::get_if<StaticQuantizer>(&policy)) {
        if (s->range < 0.0 || !std::isfinite(s->range)) {
            throw std::invalid_argument("experiment: static quantizer range must be > 0");
        }
    }
}

double ExperimentConfig::static_range() const {
    const auto* s = std::get_if<StaticQuantizer>(&policy);
    if (s == nullptr || s->range == 0.0) return 10.0 * params.M0;
    return s->range;
}

namespace {

void add_law(std::vector<std::pair<std::string, std::string>>& out, const std::string& prefix,
             const DistributionSpec& spec) {
    out.emplace_back(prefix + ".kind", spec.kind());
    std::visit(overloaded{[&](const Gaussian& g) {
                              out.emplace_back(prefix + ".mean", format_double(g.mean));
                              out.emplace_back(prefix + ".stddev", format_double(g.stddev));
                          },
                          [&](const Uniform& u) {
                              out.emplace_back(prefix + ".lo", format_double(u.lo));
                              out.emplace_back(prefix + ".hi", format_double(u.hi));
                          },
                          [&](const TwoPoint& t) {
                              out.emplace_back(prefix + ".v1", format_double(t.v1));
                              out.emplace_back(prefix + ".p", format_double(t.p));
                              out.emplace_back(prefix + ".v2", format_double(t.v2));
                          },
                          [&](const StudentT& t) {
                              out.emplace_back(prefix + ".dof", format_double(t.dof));
                              out.emplace_back(prefix + ".scale", format_double(t.scale));
                              out.emplace_back(prefix + ".shift", format_double(t.shift));
                          }},
               spec.law());
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    add_law(out, "A", cfg.A);
    add_law(out, "W", cfg.W);
    out.emplace_back("P", format_double(cfg.params.P));
    out.emplace_back("L", std::to_string(cfg.params.L));
    out.emplace_back("M0", format_double(cfg.params.M0));
    out.emplace_back("K", format_double(cfg.params.K));
    out.emplace_back("c", format_double(cfg.params.c));
    out.emplace_back("horizon", std::to_string(cfg.horizon));
    out.emplace_back("trials", std::to_string(cfg.trials));
    out.emplace_back("seed", std::to_string(cfg.master_seed));
    out.emplace_back("policy", policy_name(cfg.policy));
    if (std::holds_alternative<StaticQuantizer>(cfg.policy)) {
        out.emplace_back("static.range", format_double(cfg.static_range()));
    }
    out.emplace_back("alpha", format_double(cfg.alpha));
    out.emplace_back("split", format_double(cfg.split));
    return out;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::stable: return "stable";
        case Verdict::unstable: return "unstable";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

double window_ratio(const std::vector<CurvePoint>& curve, double split) {
    if (curve.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto H = static_cast<double>(curve.back().n);
    const auto start = static_cast<std::int64_t>(std::ceil(H * split));
    const auto mid = static_cast<std::int64_t>(std::ceil(H * (1.0 + split) / 2.0));
    RunningStats early, late;
    for (const auto& p : curve) {
        if (p.count == 0) continue;
        if (p.n >= mid) {
            late.add(p.mean);
        } else if (p.n >= start) {
            early.add(p.mean);
        }
    }
    if (early.count() == 0 || late.count() == 0) return std::numeric_limits<double>::quiet_NaN();
    if (early.mean() == 0.0) return late.mean() == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return late.mean() / early.mean();
}

Verdict stability_verdict(const SummaryStats& stats, double split) {
    if (stats.diverged_count >= stats.trials || static_cast<double>(stats.diverged_count) > 0.01 * stats.trials) {
        return Verdict::unstable;
    }
    if (stats.horizon < 1000) return Verdict::inconclusive;
    const double ratio = window_ratio(stats.second_moment_curve, split);
    if (ratio >= 0.5 && ratio <= 1.5 && stats.diverged_count == 0) return Verdict::stable;
    if (ratio > 4.0) return Verdict::unstable;
    return Verdict::inconclusive;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(master_seed) ^ index);
}

unsigned thread_count() {
    if (const char* env = std::getenv("ZOOMCTL_THREADS"); env != nullptr && *env != '\0') {
        const auto v = parse_integer<unsigned>(env);
        if (!v || *v == 0) {
            throw std::invalid_argument(std::string("ZOOMCTL_THREADS must be a positive integer, got '") + env + "'");
        }
        return *v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Baseline policies share the plant and the recording format of run_trial.
Trace run_baseline(const ExperimentConfig& cfg, std::uint64_t seed) {
    const StrategyParams& p = cfg.params;
    const double mu_A = mean_of(cfg.A);
    const double mu_W = mean_of(cfg.W);
    Trace trace(p, cfg.A, cfg.W, seed);
    trace.rows.reserve(static_cast<std::size_t>(cfg.horizon) + 1);
    RandomState rng(seed);

    const bool quantized = std::holds_alternative<StaticQuantizer>(cfg.policy);
    const std::optional<UniformPartition> part =
        quantized ? std::optional<UniformPartition>(UniformPartition(cfg.static_range(), p.L)) : std::nullopt;
    TrackerState tracker = TrackerState::initial(p);
    std::int64_t round = -1;
    double x = 0.0;

    for (std::int64_t n = 0; n <= cfg.horizon; ++n) {
        if (!std::isfinite(x) || std::abs(x) > kDivergenceThreshold) {
            trace.diverged = true;
            break;
        }
        TraceRow row;
        row.n = n;
        row.X = x;
        if (quantized) {
            if (part->covers(x)) {
                const std::uint64_t s = part->index_of(x);
                const NormalUpdate u = part->update(s, p.M0);
                tracker = {Mode::normal, u.M, u.I, u.rho, n};
                row.symbol = s;
                row.U = u.rho * mu_A * (u.M - u.I) + mu_W;
            } else {
                tracker.mode = Mode::emergency;
                tracker.n = n;
                row.symbol = p.emergency_symbol();
                row.U = mu_W;
            }
            row.mode = tracker.mode;
            row.M = tracker.M;
            row.I = tracker.I;
            row.rho = tracker.rho;
        } else {
            row.mode = Mode::normal;
            row.U = std::holds_alternative<PerfectObservation>(cfg.policy) ? mu_A * x + mu_W : mu_W;
        }
        if (row.mode == Mode::normal) ++round;
        row.round_id = round;
        row.A = sample(cfg.A, rng);
        row.W = sample(cfg.W, rng);
        trace.rows.push_back(row);
        x = plant_step(x, row.U, row.A, row.W);
    }
    return trace;
}

}  // namespace

Trace run_policy_trial(const ExperimentConfig& cfg, std::size_t index) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, index);
    if (is_adaptive(cfg.policy)) return run_trial(cfg.A, cfg.W, cfg.params, cfg.horizon, seed);
    return run_baseline(cfg, seed);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const unsigned threads = options.threads != 0 ? options.threads : thread_count();
    const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(threads) * 4);
    const auto len = static_cast<std::size_t>(cfg.horizon) + 1;

    std::vector<RunningStats> curve(len);
    std::optional<DriftAccumulator> drift;
    if (is_adaptive(cfg.policy)) drift.emplace(cfg.params, moments(cfg.W));

    ExperimentResult result;
    SummaryStats& s = result.stats;
    s.horizon = cfg.horizon;
    s.trials = cfg.trials;
    std::size_t rows_seen = 0;
    std::size_t emergency_rows = 0;

    std::vector<std::optional<Trace>> slots(batch);
    for (std::size_t first = 0; first < cfg.trials; first += batch) {
        const std::size_t count = std::min(batch, cfg.trials - first);
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::atomic<bool> failed{false};
        auto work = [&] {
            for (std::size_t k; (k = next.fetch_add(1)) < count;) {
                try {
                    slots[k].emplace(run_policy_trial(cfg, first + k));
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        };
        if (threads <= 1 || count == 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < std::min<std::size_t>(threads, count); ++t) pool.emplace_back(work);
        }
        if (error) std::rethrow_exception(error);

        for (std::size_t k = 0; k < count; ++k) {
            Trace& trace = *slots[k];
            const std::size_t index = first + k;
            if (options.on_trace) options.on_trace(index, trace);
            if (trace.tracker_mismatch) ++s.tracker_mismatches;
            if (trace.diverged) {
                ++s.diverged_count;
            } else {
                for (const auto& row : trace.rows) {
                    curve[static_cast<std::size_t>(row.n)].add(row.X * row.X);
                    if (row.mode == Mode::emergency) ++emergency_rows;
                    s.max_symbol = std::max(s.max_symbol, row.symbol);
                }
                rows_seen += trace.rows.size();
                if (drift) drift->add(trace);
            }
            if (index < options.keep_traces) result.kept.push_back(std::move(trace));
            slots[k].reset();
        }
    }

    s.second_moment_curve.reserve(len);
    for (std::size_t n = 0; n < len; ++n) {
        s.second_moment_curve.push_back(
            {static_cast<std::int64_t>(n), curve[n].mean(), curve[n].stderr_mean(), curve[n].count()});
    }
    s.emergency_fraction = rows_seen == 0 ? 0.0 : static_cast<double>(emergency_rows) / rows_seen;
    s.window_ratio = window_ratio(s.second_moment_curve, cfg.split);
    s.max_mean_Nsq = drift ? drift->max_mean_Nsq() : std::numeric_limits<double>::quiet_NaN();
    s.terminal_mean = s.second_moment_curve.back().mean;
    return result;
}

std::string to_string(SweepDim d) {
    switch (d) {
        case SweepDim::P: return "P";
        case SweepDim::L: return "L";
        case SweepDim::K: return "K";
        case SweepDim::M0: return "M0";
        case SweepDim::R: return "R";
    }
    return "?";
}

std::optional<SweepDim> parse_sweep_dim(const std::string& s) {
    if (s == "P") return SweepDim::P;
    if (s == "L") return SweepDim::L;
    if (s == "K") return SweepDim::K;
    if (s == "M0") return SweepDim::M0;
    if (s == "R") return SweepDim::R;
    return std::nullopt;
}

ExperimentConfig with_dimension(const ExperimentConfig& cfg, SweepDim dim, double value) {
    ExperimentConfig out = cfg;
    auto integral = [&](const char* name) {
        if (!(value == std::floor(value)) || !(value >= 1.0) || value > static_cast<double>(kMaxCellsPerSide)) {
            throw std::invalid_argument(std::string("sweep: ") + name + " values must be positive integers, got " +
                                        format_double(value));
        }
        return static_cast<std::int64_t>(value);
    };
    switch (dim) {
        case SweepDim::P: out.params.P = value; break;
        case SweepDim::L: out.params.L = integral("L"); break;
        case SweepDim::K: out.params.K = value; break;
        case SweepDim::M0: out.params.M0 = value; break;
        case SweepDim::R: {
            const std::int64_t r = integral("R");
            if (r < 2 || r > 62) throw std::invalid_argument("sweep: R must lie in [2, 62]");
            out.params.L = (std::int64_t{1} << (r - 1)) - 1;
            break;
        }
    }
    out.validate();
    return out;
}

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, SweepDim dim, const std::vector<double>& values,
                            const RunOptions& options) {
    if (values.empty()) throw std::invalid_argument("sweep: no values given");
    std::vector<ExperimentConfig> configs;
    configs.reserve(values.size());
    for (double v : values) configs.push_back(with_dimension(cfg, dim, v));

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const ExperimentConfig& c = configs[i];
        SweepRow row;
        row.value = values[i];
        row.params = c.params;
        row.R = rate(c.params);
        RunOptions run = options;
        run.keep_traces = 0;
        row.stats = run_experiment(c, run).stats;
        row.verdict = stability_verdict(row.stats, c.split);
        try {
            const FeasibilityReport f = feasibility(c.A, c.W, c.params, c.alpha);
            row.feasible = f.ok;
            row.margin_drift = f.margin_drift;
        } catch (const std::exception&) {
            row.feasible = false;
            row.margin_drift = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

void write_provenance(std::ostream& os, const Provenance& provenance) {
    for (const auto& [k, v] : provenance) os << "# " << k << '=' << v << '\n';
}

}  // namespace

void write_curve_csv(std::ostream& os, const SummaryStats& stats, const Provenance& provenance) {
    write_provenance(os, provenance);
    os << "n,mean,stderr,count\n";
    for (const auto& p : stats.second_moment_curve) {
        os << p.n << ',' << format_double(p.mean) << ',' << format_double(p.stderr_mean) << ',' << p.count << '\n';
    }
}

void write_sweep_csv(std::ostream& os, SweepDim dim, const std::vector<SweepRow>& rows,
                     const Provenance& provenance) {
    write_provenance(os, provenance);
    os << "dim,value,P,L,K,M0,R,verdict,window_ratio,diverged_count,emergency_fraction,terminal_mean,"
          "max_mean_Nsq,feasible,margin_drift\n";
    for (const auto& r : rows) {
        os << to_string(dim) << ',' << format_double(r.value) << ',' << format_double(r.params.P) << ','
           << r.params.L << ',' << format_double(r.params.K) << ',' << format_double(r.params.M0) << ',' << r.R
           << ',' << to_string(r.verdict) << ',' << format_double(r.stats.window_ratio) << ','
           << r.stats.diverged_count << ',' << format_double(r.stats.emergency_fraction) << ','
           << format_double(r.stats.terminal_mean) << ',' << format_double(r.stats.max_mean_Nsq) << ','
           << (r.feasible ? "true" : "false") << ',' << format_double(r.margin_drift) << '\n';
    }
}

std::string summary_json(const ExperimentConfig& cfg, const SummaryStats& stats, Verdict verdict) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
    j["config"] = config;
    j["policy"] = policy_name(cfg.policy);
    j["verdict"] = to_string(verdict);
    j["horizon"] = stats.horizon;
    j["trials"] = stats.trials;
    j["diverged_count"] = stats.diverged_count;
    j["excluded_trials"] = stats.diverged_count;
    j["tracker_mismatches"] = stats.tracker_mismatches;
    j["R"] = rate(cfg.params);
    j["max_symbol"] = stats.max_symbol;
    j["emergency_fraction"] = num(stats.emergency_fraction);
    j["window_ratio"] = num(stats.window_ratio);
    j["split"] = cfg.split;
    j["max_mean_Nsq"] = num(stats.max_mean_Nsq);
    j["terminal_mean_X2"] = num(stats.terminal_mean);
    j["theoretical_bound"] = num(is_adaptive(cfg.policy) ? theoretical_bound(cfg.params, moments(cfg.W))
                                                         : std::numeric_limits<double>::quiet_NaN());
    return j.dump(2) + "\n";
}

}  // namespace zoomctl
