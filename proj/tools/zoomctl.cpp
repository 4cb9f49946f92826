// zoomctl: command-line front end for the simulator and its checks.
//
// Exit codes: 0 pass/stable, 1 usage or config error, 2 negative result,
// 3 inconclusive.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "zoomctl/analysis.hpp"
#include "zoomctl/config.hpp"
#include "zoomctl/control_loop.hpp"
#include "zoomctl/format.hpp"
#include "zoomctl/harness.hpp"

namespace fs = std::filesystem;
using namespace zoomctl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNegative = 2;
constexpr int kExitInconclusive = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int verdict_exit(Verdict v) {
    switch (v) {
        case Verdict::stable: return kExitOk;
        case Verdict::unstable: return kExitNegative;
        case Verdict::inconclusive: return kExitInconclusive;
    }
    return kExitInconclusive;
}

void require_stabilizable(const ExperimentConfig& cfg) {
    const Moments a = moments(cfg.A);
    if (!(a.variance < 1.0)) {
        throw NotStabilizable("not second-moment stabilizable: sigma_A^2 = " + format_double(a.variance) +
                              " >= 1 (requires sigma_A^2 < 1)");
    }
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        const std::string t = item.substr(b, e - b + 1);
        auto v = parse_double(t);
        if (!v) throw UsageError("--values: '" + t + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

// ------------------------------------------------------------------- simulate

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_dir,
                 std::size_t keep) {
    const ExperimentConfig cfg = load_config(config_path, sets).config;
    require_stabilizable(cfg);
    if (std::holds_alternative<AdaptiveFixedRate>(cfg.policy)) {
        try {
            const FeasibilityReport f = feasibility(cfg.A, cfg.W, cfg.params, cfg.alpha);
            if (!f.ok) std::cerr << "warning: parameters are not feasible (see `zoomctl feasibility`)\n";
        } catch (const std::exception& e) {
            std::cerr << "warning: feasibility not evaluated: " << e.what() << '\n';
        }
    }
    RunOptions opts;
    opts.keep_traces = keep;
    const ExperimentResult res = run_experiment(cfg, opts);
    const Verdict verdict = stability_verdict(res.stats, cfg.split);

    fs::create_directories(out_dir);
    const Provenance prov = config_entries(cfg);
    write_file(fs::path(out_dir) / "summary.json", summary_json(cfg, res.stats, verdict));
    {
        std::ostringstream os;
        write_curve_csv(os, res.stats, prov);
        write_file(fs::path(out_dir) / "curve.csv", os.str());
    }
    for (std::size_t i = 0; i < res.kept.size(); ++i) {
        const Trace& t = res.kept[i];
        std::vector<std::string> lines;
        for (const auto& [k, v] : prov) lines.push_back(k + "=" + v);
        lines.push_back("trial=" + std::to_string(i));
        lines.push_back("trial_seed=" + std::to_string(t.seed));
        lines.push_back(std::string("diverged=") + (t.diverged ? "true" : "false"));
        std::ostringstream name;
        name << "trace_" << std::setw(4) << std::setfill('0') << i << ".csv";
        std::ostringstream os;
        write_trace_csv(os, t.rows, lines);
        write_file(fs::path(out_dir) / name.str(), os.str());
    }
    std::cout << "policy=" << policy_name(cfg.policy) << " trials=" << res.stats.trials
              << " horizon=" << res.stats.horizon << " diverged=" << res.stats.diverged_count
              << " emergency_fraction=" << format_double(res.stats.emergency_fraction)
              << " window_ratio=" << format_double(res.stats.window_ratio)
              << " terminal_mean_X2=" << format_double(res.stats.terminal_mean) << " verdict=" << to_string(verdict)
              << '\n';
    return verdict_exit(verdict);
}

// --------------------------------------------------------------------- verify

struct CheckResult {
    std::string name;
    bool passed;
    std::string detail;
};

const std::vector<std::string> kAllChecks = {"domination", "drift", "containment", "tracker_equality",
                                             "oracle_match"};

constexpr std::size_t kDominationTrials = 100;
constexpr std::size_t kDominationPointsPerTrial = 10;

CheckResult check_trace_file(const std::string& path, const ExperimentConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw UsageError("--trace: cannot open " + path);
    const std::vector<TraceRow> rows = read_trace_csv(in);
    const auto bad = replay_controller(rows, cfg.params, mean_of(cfg.A), mean_of(cfg.W));
    if (bad) return {"tracker_equality", false, "trace file diverges from the controller at n=" + std::to_string(*bad)};
    return {"tracker_equality", true, std::to_string(rows.size()) + " recorded rows replayed bit-identically"};
}

// Baselines run with at least this many trials so that the plateau's
// standard error stays well inside the 5% tolerance.
constexpr std::size_t kOracleTrials = 10000;

std::vector<CheckResult> run_oracle_match(ExperimentConfig cfg) {
    cfg.trials = std::max(cfg.trials, kOracleTrials);
    const Moments ma = moments(cfg.A);
    std::vector<CheckResult> out;

    ExperimentConfig zc = cfg;
    zc.policy = ZeroControl{};
    zc.horizon = std::min<std::int64_t>(20, cfg.horizon);
    const SummaryStats zs = run_experiment(zc).stats;
    const OracleCurve zo = moment_recursion_curve(OraclePolicy::zero_control, cfg.A, cfg.W, zc.horizon);
    double worst = 0.0;
    std::int64_t worst_n = 0;
    std::size_t fails = 0;
    for (const auto& p : zs.second_moment_curve) {
        const double se = zo.stderr_of_mean(p.n, p.count);
        const double dev = std::abs(p.mean - zo.second[static_cast<std::size_t>(p.n)]);
        const double z = se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : INFINITY);
        if (z > worst) worst = z, worst_n = p.n;
        if (!(dev <= 3.0 * se)) ++fails;
    }
    out.push_back({"oracle_match(zero_control)", fails == 0,
                   "n<=" + std::to_string(zc.horizon) + ", max |z|=" + format_double(worst) + " at n=" +
                       std::to_string(worst_n) + ", " + std::to_string(fails) + " points beyond 3 se"});

    ExperimentConfig po = cfg;
    po.policy = PerfectObservation{};
    const SummaryStats ps = run_experiment(po).stats;
    const OracleCurve oo = moment_recursion_curve(OraclePolicy::perfect_observation, cfg.A, cfg.W, po.horizon);
    fails = 0;
    worst = 0.0;
    worst_n = 0;
    std::vector<std::int64_t> checkpoints;
    for (std::int64_t n = 1; n <= po.horizon; n *= 2) checkpoints.push_back(n);
    if (checkpoints.back() != po.horizon) checkpoints.push_back(po.horizon);
    for (std::int64_t n : checkpoints) {
        const CurvePoint& p = ps.second_moment_curve[static_cast<std::size_t>(n)];
        const double se = oo.stderr_of_mean(n, p.count);
        const double dev = std::abs(p.mean - oo.second[static_cast<std::size_t>(n)]);
        const double z = se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : INFINITY);
        if (z > worst) worst = z, worst_n = n;
        if (!(dev <= 3.0 * se)) ++fails;
    }
    out.push_back({"oracle_match(perfect_observation)", fails == 0,
                   std::to_string(checkpoints.size()) + " log-spaced n, max |z|=" + format_double(worst) +
                       " at n=" + std::to_string(worst_n)});
    if (po.horizon >= 1000) {
        const double fixed = 1.0 / (1.0 - ma.variance) * moments(cfg.W).variance;
        const double got = ps.terminal_mean;
        const double rel = std::abs(got - fixed) / fixed;
        out.push_back({"oracle_match(plateau)", rel <= 0.05,
                       "mean X^2 at n=" + std::to_string(po.horizon) + " is " + format_double(got) +
                           ", fixed point " + format_double(fixed) + ", relative error " + format_double(rel)});
    }
    return out;
}

int cmd_verify(const std::string& config_path, const std::vector<std::string>& sets, std::vector<std::string> checks,
               const std::string& trace_path) {
    if (checks.empty()) checks = kAllChecks;
    for (const auto& c : checks) {
        if (std::find(kAllChecks.begin(), kAllChecks.end(), c) == kAllChecks.end()) {
            throw UsageError("--checks: unknown check '" + c + "'");
        }
    }
    auto selected = [&](const std::string& c) { return std::find(checks.begin(), checks.end(), c) != checks.end(); };

    const ExperimentConfig cfg = load_config(config_path, sets).config;
    require_stabilizable(cfg);

    const bool replay_file = selected("tracker_equality") && !trace_path.empty();
    const bool need_run = selected("domination") || selected("drift") || selected("containment") ||
                          (selected("tracker_equality") && !replay_file);
    if (need_run && !std::holds_alternative<AdaptiveFixedRate>(cfg.policy)) {
        throw UsageError("verify: domination, drift, containment and tracker_equality need policy "
                         "adaptive_fixed_rate");
    }
    if (selected("drift") && cfg.trials < kMinDriftTraces) {
        throw UsageError("verify: the drift check needs at least " + std::to_string(kMinDriftTraces) +
                         " trials; the config has " + std::to_string(cfg.trials) + " (set trials >= " +
                         std::to_string(kMinDriftTraces) + ")");
    }

    std::vector<CheckResult> results;
    if (need_run) {
        DominationReport dom;
        ContainmentReport cont;
        std::optional<DriftAccumulator> drift;
        if (selected("drift")) drift.emplace(cfg.params, moments(cfg.W));
        std::size_t mismatched = 0, replay_bad = 0;
        std::optional<std::pair<std::size_t, std::int64_t>> first_mismatch;

        RunOptions opts;
        opts.on_trace = [&](std::size_t i, const Trace& t) {
            if (selected("tracker_equality") && !replay_file) {
                if (t.tracker_mismatch) {
                    ++mismatched;
                    if (!first_mismatch) first_mismatch = {i, *t.tracker_mismatch};
                }
                if (replay_controller(t.rows, t.params, mean_of(t.A), mean_of(t.W))) ++replay_bad;
            }
            if (selected("domination") && i < kDominationTrials && !t.rows.empty()) {
                std::mt19937_64 pick(derive_seed(cfg.master_seed ^ 0xD0D0D0D0ull, i));
                std::uniform_int_distribution<std::int64_t> n0(0, static_cast<std::int64_t>(t.rows.size()) - 1);
                std::vector<std::int64_t> points;
                for (std::size_t k = 0; k < kDominationPointsPerTrial; ++k) points.push_back(n0(pick));
                const DominationReport r = check_domination(t, t.params.K, points);
                dom.checked += r.checked;
                dom.violations.insert(dom.violations.end(), r.violations.begin(), r.violations.end());
            }
            if (selected("containment")) cont += check_containment(t);
            if (drift) drift->add(t);
        };
        const SummaryStats stats = run_experiment(cfg, opts).stats;

        if (selected("domination")) {
            std::string detail = std::to_string(dom.checked) + " sampled n0, " + std::to_string(dom.violations.size()) +
                                 " violations";
            if (!dom.violations.empty()) {
                detail += " (first: n0=" + std::to_string(dom.violations[0].n0) + ", |X|=" +
                          format_double(dom.violations[0].abs_X) + " > N=" + format_double(dom.violations[0].N) + ")";
            }
            results.push_back({"domination", dom.passed() && dom.checked > 0, detail});
        }
        if (drift) {
            const DriftReport r = drift->report();
            std::ostringstream d;
            d << r.traces << " traces, " << r.flagged.size() << " flagged n, " << r.cap_exceeded.size()
              << " cap exceedances (cap D/c=" << format_double(r.cap) << ", max mean N^2="
              << format_double(r.max_mean_Nsq) << "), halving " << r.halving_violations << "/" << r.halving_checks
              << " violations";
            if (!r.flagged.empty()) d << ", first flagged n=" << r.flagged.front();
            results.push_back({"drift", r.passed(), d.str()});
        }
        if (selected("containment")) {
            std::ostringstream d;
            d << cont.normal_steps << " normal steps (" << cont.unclamped_steps << " unclamped), "
              << cont.interval_violations << " interval, " << cont.control_error_violations << " control-error, "
              << cont.emergency_violations << "/" << cont.emergency_steps << " emergency violations";
            if (cont.clamped_interval_violations > 0) {
                d << " (" << cont.clamped_interval_violations << " clamped steps outside the interval, not counted)";
            }
            results.push_back({"containment", cont.passed(), d.str()});
        }
        if (selected("tracker_equality") && !replay_file) {
            std::string detail = std::to_string(stats.trials) + " trials, " + std::to_string(mismatched) +
                                 " with encoder/controller mismatch, " + std::to_string(replay_bad) +
                                 " failing replay";
            if (first_mismatch) {
                detail += " (first: trial " + std::to_string(first_mismatch->first) + " at n=" +
                          std::to_string(first_mismatch->second) + ")";
            }
            results.push_back({"tracker_equality", mismatched == 0 && replay_bad == 0, detail});
        }
    }
    if (replay_file) results.push_back(check_trace_file(trace_path, cfg));
    if (selected("oracle_match")) {
        for (auto& r : run_oracle_match(cfg)) results.push_back(std::move(r));
    }

    bool all = true;
    std::size_t width = 5;
    for (const auto& r : results) width = std::max(width, r.name.size());
    std::cout << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  detail\n";
    for (const auto& r : results) {
        all = all && r.passed;
        std::cout << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << (r.passed ? "PASS" : "FAIL")
                  << "    " << r.detail << '\n';
    }
    return all ? kExitOk : kExitNegative;
}

// ---------------------------------------------------------------- feasibility

nlohmann::ordered_json report_json(const FeasibilityReport& r, const StrategyParams& p) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["ok"] = r.ok;
    j["P"] = p.P;
    j["L"] = p.L;
    j["M0"] = p.M0;
    j["K"] = p.K;
    j["c"] = p.c;
    j["R"] = r.R;
    j["alpha"] = r.alpha;
    j["sigma_A2"] = r.sigma_A2;
    j["mu_A"] = r.mu_A;
    j["margin_drift"] = num(r.margin_drift);
    j["margin_drift_literal"] = num(r.margin_drift_literal);
    j["margin_K"] = num(r.margin_K);
    j["margin_K_literal"] = num(r.margin_K_literal);
    j["m_alpha"] = num(r.m_alpha);
    j["ell_alpha"] = num(r.ell_alpha);
    j["epsilon_ratio"] = num(r.epsilon_ratio);
    j["epsilon_estimate"] = num(r.epsilon_estimate);
    j["stability_limit"] = r.stability_limit;
    j["D"] = r.D;
    j["C"] = r.C;
    return j;
}

int cmd_feasibility(const std::string& config_path, const std::vector<std::string>& sets, bool suggest,
                    std::optional<double> epsilon) {
    const ParsedConfig parsed = load_config(config_path, sets, !suggest);
    const ExperimentConfig& cfg = parsed.config;
    StrategyParams params = cfg.params;
    FeasibilityReport report;
    if (suggest) {
        SuggestOptions opt;
        if (parsed.given.count("c")) opt.c = cfg.params.c;
        if (parsed.given.count("K")) opt.K = cfg.params.K;
        if (parsed.given.count("M0")) opt.M0 = cfg.params.M0;
        if (epsilon) opt.epsilon_target = *epsilon;
        const Suggestion s = suggest_params(cfg.A, cfg.W, cfg.alpha, opt);
        params = s.params;
        report = s.report;
    } else {
        report = feasibility(cfg.A, cfg.W, params, cfg.alpha);
    }

    auto row = [](const std::string& k, const std::string& v) {
        std::cout << std::left << std::setw(22) << k << v << '\n';
    };
    if (suggest) {
        std::cout << "suggested strategy (epsilon target " << format_double(epsilon.value_or(SuggestOptions{}.epsilon_target))
                  << "):\n";
        std::cout << "  P = " << format_double(params.P) << "\n  L = " << params.L << "\n  M0 = "
                  << format_double(params.M0) << "\n  K = " << format_double(params.K) << "\n  c = "
                  << format_double(params.c) << "\n\n";
    }
    row("ok", report.ok ? "true" : "false");
    row("R (bits)", std::to_string(report.R));
    row("margin_drift", format_double(report.margin_drift));
    row("margin_drift_literal", format_double(report.margin_drift_literal));
    row("margin_K", format_double(report.margin_K));
    row("margin_K_literal", format_double(report.margin_K_literal));
    row("m_alpha", format_double(report.m_alpha));
    row("ell_alpha", format_double(report.ell_alpha));
    row("epsilon_estimate", format_double(report.epsilon_estimate));
    row("c + epsilon", format_double(report.c + report.epsilon_estimate));
    row("stability_limit", format_double(report.stability_limit));
    row("D", format_double(report.D));
    row("C = D/c", format_double(report.C));
    std::cout << report_json(report, params).dump() << '\n';
    return report.ok ? kExitOk : kExitNegative;
}

// ---------------------------------------------------------------------- sweep

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets, const std::string& dim_name,
              const std::string& values_text, const std::string& out_dir) {
    const auto dim = parse_sweep_dim(dim_name);
    if (!dim || *dim == SweepDim::R) {
        throw UsageError("--dim: expected one of P, L, K, M0, got '" + dim_name + "'");
    }
    const std::vector<double> values = parse_values(values_text);
    if (values.empty()) throw UsageError("--values: no values given");
    const ExperimentConfig cfg = load_config(config_path, sets).config;
    require_stabilizable(cfg);
    std::vector<SweepRow> rows;
    try {
        rows = sweep(cfg, *dim, values);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    fs::create_directories(out_dir);
    std::ostringstream os;
    write_sweep_csv(os, *dim, rows, config_entries(cfg));
    write_file(fs::path(out_dir) / "sweep.csv", os.str());
    for (const auto& r : rows) {
        std::cout << dim_name << '=' << format_double(r.value) << " R=" << r.R << " verdict=" << to_string(r.verdict)
                  << " window_ratio=" << format_double(r.stats.window_ratio) << '\n';
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zoomctl: fixed-rate adaptive quantized control simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", trace_path, dim, values;
    std::vector<std::string> sets, checks;
    std::size_t keep = 0;
    bool suggest = false;
    double epsilon = 0.0;
    std::int64_t L = 0;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "Config file")->required();
        sub->add_option("--set", sets, "Override a config key (key=value)");
    };

    auto* sim = app.add_subcommand("simulate", "Run an ensemble and write summary.json, curve.csv and traces");
    add_config(sim);
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_option("--keep-traces", keep, "Number of trace CSVs to write");

    auto* ver = app.add_subcommand("verify", "Run analysis checks and print a pass/fail table");
    add_config(ver);
    ver->add_option("--checks", checks, "domination,drift,containment,tracker_equality,oracle_match")
        ->delimiter(',');
    ver->add_option("--trace", trace_path, "Trace CSV to replay for tracker_equality");

    auto* fea = app.add_subcommand("feasibility", "Check strategy parameters against the stability conditions");
    add_config(fea);
    fea->add_flag("--suggest", suggest, "Search for P and L meeting the epsilon target");
    auto* eps_opt = fea->add_option("--epsilon", epsilon, "Epsilon target for --suggest");

    auto* swp = app.add_subcommand("sweep", "Run one experiment per value of a strategy parameter");
    add_config(swp);
    swp->add_option("--dim", dim, "P, L, K or M0")->required();
    swp->add_option("--values", values, "Comma-separated values")->required();
    swp->add_option("--out", out_dir, "Output directory");

    auto* rat = app.add_subcommand("rate", "Print the bits per step R for L cells per side");
    rat->add_option("--L", L, "Cells per side")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) return cmd_simulate(config_path, sets, out_dir, keep);
        if (*ver) return cmd_verify(config_path, sets, checks, trace_path);
        if (*fea) {
            std::optional<double> eps;
            if (*eps_opt) eps = epsilon;
            return cmd_feasibility(config_path, sets, suggest, eps);
        }
        if (*swp) return cmd_sweep(config_path, sets, dim, values, out_dir);
        if (*rat) {
            std::cout << rate_for_cells(L) << '\n';
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
