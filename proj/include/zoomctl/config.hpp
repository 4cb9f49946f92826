#pragma once

// Plain-text experiment configuration: `key = value` lines, '#' comments and
// optional [system], [strategy], [experiment] section headers.
//
//   [system]      A.kind, A.mean, A.stddev, A.lo, A.hi, A.v1, A.p, A.v2,
//                 A.dof, A.scale, A.shift, and the same keys for W
//   [strategy]    P, L, M0, K, c
//   [experiment]  horizon, trials, seed, policy, alpha, split, static.range

#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoomctl/harness.hpp"

namespace zoomctl {

/// Message format: "<origin>:<line>: <what>" or "<origin>: <what>".
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParsedConfig {
    ExperimentConfig config;
    std::set<std::string> given;  // keys present in the file or the overrides
};

/// Strategy keys are required for adaptive_fixed_rate (all five) and
/// static_quantizer (L and M0) unless `require_strategy` is false.
/// Each override is "key=value" and replaces the file's value.
ParsedConfig parse_config(std::istream& is, const std::string& origin, const std::vector<std::string>& overrides = {},
                          bool require_strategy = true);

ParsedConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {},
                         bool require_strategy = true);

/// The resolved config in file syntax, one section per group.
std::string to_config_text(const ExperimentConfig& cfg);

}  // namespace zoomctl
