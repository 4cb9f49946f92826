#include "zoomctl/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "zoomctl/format.hpp"

namespace zoomctl {

namespace {

constexpr std::array<const char*, 11> kLawFields = {"kind", "mean", "stddev", "lo", "hi", "v1",
                                                     "p",    "v2",   "dof",    "scale", "shift"};
constexpr std::array<const char*, 5> kStrategyKeys = {"P", "L", "M0", "K", "c"};
constexpr std::array<const char*, 7> kExperimentKeys = {"horizon", "trials", "seed",        "policy",
                                                        "alpha",   "split",  "static.range"};

std::string section_of(const std::string& key) {
    for (const char* prefix : {"A.", "W."}) {
        if (key.rfind(prefix, 0) == 0) {
            const std::string field = key.substr(2);
            for (const char* f : kLawFields) {
                if (field == f) return "system";
            }
            return "";
        }
    }
    for (const char* k : kStrategyKeys) {
        if (key == k) return "strategy";
    }
    for (const char* k : kExperimentKeys) {
        if (key == k) return "experiment";
    }
    return "";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    std::string where;  // "origin:line" or "--set key=value"
};

class Builder {
public:
    explicit Builder(std::string origin) : origin_(std::move(origin)) {}

    void read(std::istream& is) {
        std::string raw;
        std::size_t line_no = 0;
        std::string section;
        while (std::getline(is, raw)) {
            ++line_no;
            const std::string where = origin_ + ":" + std::to_string(line_no);
            std::string line = raw;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
                section = trim(line.substr(1, line.size() - 2));
                if (section != "system" && section != "strategy" && section != "experiment") {
                    throw ConfigError(where + ": unknown section [" + section + "]");
                }
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            const std::string home = section_of(key);
            if (home.empty()) throw ConfigError(where + ": unknown key '" + key + "'");
            if (!section.empty() && section != home) {
                throw ConfigError(where + ": key '" + key + "' belongs in [" + home + "], not [" + section + "]");
            }
            if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
            if (auto it = entries_.find(key); it != entries_.end()) {
                throw ConfigError(where + ": duplicate key '" + key + "' (first set at " + it->second.where + ")");
            }
            entries_[key] = {value, where};
        }
    }

    void apply_override(const std::string& spec) {
        const std::string where = "--set " + spec;
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
        const std::string key = trim(spec.substr(0, eq));
        const std::string value = trim(spec.substr(eq + 1));
        if (section_of(key).empty()) throw ConfigError(where + ": unknown key '" + key + "'");
        if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
        entries_[key] = {value, where};
    }

    ParsedConfig build(bool require_strategy) {
        ParsedConfig out;
        for (const auto& [k, e] : entries_) out.given.insert(k);
        ExperimentConfig& cfg = out.config;

        if (auto p = text("policy")) {
            auto policy = parse_policy(*p);
            if (!policy) {
                throw ConfigError(where("policy") + ": unknown policy '" + *p +
                                  "' (expected adaptive_fixed_rate, static_quantizer, perfect_observation or "
                                  "zero_control)");
            }
            cfg.policy = *policy;
        }
        const bool adaptive = std::holds_alternative<AdaptiveFixedRate>(cfg.policy);
        const bool quantized = std::holds_alternative<StaticQuantizer>(cfg.policy);

        cfg.A = law("A");
        cfg.W = law("W");

        if (require_strategy) {
            std::vector<const char*> required;
            if (adaptive) required.assign(kStrategyKeys.begin(), kStrategyKeys.end());
            if (quantized) required = {"L", "M0"};
            for (const char* k : required) {
                if (!entries_.count(k)) {
                    throw ConfigError(origin_ + ": missing required key '" + std::string(k) + "' for policy " +
                                      policy_name(cfg.policy));
                }
            }
        }
        if (auto v = integer<std::int64_t>("L")) cfg.params.L = *v;
        if (auto v = real("P")) cfg.params.P = *v;
        if (auto v = real("M0")) cfg.params.M0 = *v;
        if (auto v = real("K")) cfg.params.K = *v;
        if (auto v = real("c")) cfg.params.c = *v;

        if (auto v = integer<std::int64_t>("horizon")) cfg.horizon = *v;
        if (auto v = integer<std::size_t>("trials")) cfg.trials = *v;
        if (auto v = integer<std::uint64_t>("seed")) cfg.master_seed = *v;
        if (auto v = real("alpha")) cfg.alpha = *v;
        if (auto v = real("split")) cfg.split = *v;
        if (auto v = real("static.range")) {
            if (!quantized) throw ConfigError(where("static.range") + ": static.range applies only to static_quantizer");
            if (!(*v > 0.0)) throw ConfigError(where("static.range") + ": static.range must be > 0");
            cfg.policy = StaticQuantizer{*v};
        }

        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            const std::string msg = e.what();
            std::string loc = origin_;
            for (const char* k : {"P", "L", "M0", "K", "c", "horizon", "trials", "split", "alpha"}) {
                if (msg.find(std::string(" ") + k + " must") != std::string::npos ||
                    msg.find(std::string(": ") + k + " must") != std::string::npos) {
                    if (entries_.count(k)) loc = where(k);
                    break;
                }
            }
            throw ConfigError(loc + ": " + msg);
        }
        return out;
    }

private:
    std::string where(const std::string& key) const { return entries_.at(key).where; }

    std::optional<std::string> text(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second.value;
    }

    std::optional<double> real(const std::string& key) const {
        auto t = text(key);
        if (!t) return std::nullopt;
        auto v = parse_double(*t);
        if (!v) throw ConfigError(where(key) + ": key '" + key + "' expects a number, got '" + *t + "'");
        return v;
    }

    template <class Int>
    std::optional<Int> integer(const std::string& key) const {
        auto t = text(key);
        if (!t) return std::nullopt;
        auto v = parse_integer<Int>(*t);
        if (!v) throw ConfigError(where(key) + ": key '" + key + "' expects an integer, got '" + *t + "'");
        return v;
    }

    double need(const std::string& prefix, const std::string& field, const std::string& kind) const {
        const std::string key = prefix + "." + field;
        auto v = real(key);
        if (!v) {
            throw ConfigError(where(prefix + ".kind") + ": " + kind + " law for " + prefix + " needs key '" + key +
                              "'");
        }
        return *v;
    }

    DistributionSpec law(const std::string& prefix) const {
        const std::string kind_key = prefix + ".kind";
        auto kind = text(kind_key);
        if (!kind) throw ConfigError(origin_ + ": missing required key '" + kind_key + "'");

        std::vector<std::string> fields;
        if (*kind == "gaussian") {
            fields = {"mean", "stddev"};
        } else if (*kind == "uniform") {
            fields = {"lo", "hi"};
        } else if (*kind == "two_point") {
            fields = {"v1", "p", "v2"};
        } else if (*kind == "student_t") {
            fields = {"dof", "scale", "shift"};
        } else {
            throw ConfigError(where(kind_key) + ": unknown law '" + *kind +
                              "' (expected gaussian, uniform, two_point or student_t)");
        }
        for (const char* f : kLawFields) {
            const std::string key = prefix + "." + f;
            if (std::string(f) == "kind" || !entries_.count(key)) continue;
            if (std::find(fields.begin(), fields.end(), f) == fields.end()) {
                throw ConfigError(where(key) + ": key '" + key + "' does not apply to a " + *kind + " law");
            }
        }
        try {
            if (*kind == "gaussian") {
                return DistributionSpec::gaussian(need(prefix, "mean", *kind), need(prefix, "stddev", *kind));
            }
            if (*kind == "uniform") {
                return DistributionSpec::uniform(need(prefix, "lo", *kind), need(prefix, "hi", *kind));
            }
            if (*kind == "two_point") {
                return DistributionSpec::two_point(need(prefix, "v1", *kind), need(prefix, "p", *kind),
                                                   need(prefix, "v2", *kind));
            }
            return DistributionSpec::student_t(need(prefix, "dof", *kind), need(prefix, "scale", *kind),
                                               need(prefix, "shift", *kind));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where(kind_key) + ": " + prefix + ": " + e.what());
        }
    }

    std::string origin_;
    std::map<std::string, Entry> entries_;
};

}  // namespace

ParsedConfig parse_config(std::istream& is, const std::string& origin, const std::vector<std::string>& overrides,
                          bool require_strategy) {
    Builder b(origin);
    b.read(is);
    for (const auto& o : overrides) b.apply_override(o);
    return b.build(require_strategy);
}

ParsedConfig load_config(const std::string& path, const std::vector<std::string>& overrides, bool require_strategy) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    return parse_config(in, path, overrides, require_strategy);
}

std::string to_config_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    std::string current;
    for (const auto& [k, v] : config_entries(cfg)) {
        const std::string s = section_of(k);
        if (s != current) {
            if (!current.empty()) os << '\n';
            os << '[' << s << "]\n";
            current = s;
        }
        os << k << " = " << v << '\n';
    }
    return os.str();
}

}  // namespace zoomctl
