#pragma once

#include "pdd/apps/cmac.hpp"
#include "pdd/apps/thp.hpp"
#include "pdd/apps/toy.hpp"
#include "pdd/longterm.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace pdd::cli {

/// Rejected configuration: unknown key, malformed value or invalid combination.
class ConfigError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

enum class Experiment { cmac, thp, toy };

[[nodiscard]] Experiment parse_experiment(const std::string& name);
[[nodiscard]] std::string to_string(Experiment e);

struct RunConfig {
    Experiment experiment = Experiment::cmac;
    SolverConfig solver;
    double tau = 1.0;          // surrogate curvature for every g_i
    double lambda_cap = 1e4;   // upper bound of every multiplier
    double start_lambda = 1.0; // initial multipliers (cmac, toy)
    cmac::Instance cmac;
    thp::Instance thp;
    toy::Instance toy;
    int baseline_samples = 1000;  // shared evaluation set (cmac) or held-out batch (thp)
    bool baseline_ellipsoid = true;
    bool baseline_short_term = true;
    bool timing = false;
    bool plot_data = true;

    /// Canonical `key = value` listing of every resolved field, sorted by key.
    [[nodiscard]] std::string canonical() const;
    /// 64-bit FNV-1a of canonical().
    [[nodiscard]] std::uint64_t hash() const;
};

/// Parses `section.key = value` lines; `#` starts a comment. Throws ConfigError on malformed lines or duplicates.
[[nodiscard]] std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Experiment-specific defaults.
[[nodiscard]] RunConfig default_config(Experiment e);

/// Overrides applied after the config file.
struct Overrides {
    std::optional<std::string> experiment;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> max_iters;
};

/// Defaults for the chosen experiment (flag, then `run.experiment`, then cmac), then file keys, then flags.
[[nodiscard]] RunConfig resolve_config(const std::map<std::string, std::string>& keys, const Overrides& overrides);

[[nodiscard]] std::uint64_t fnv1a(const std::string& text);

}  // namespace pdd::cli
