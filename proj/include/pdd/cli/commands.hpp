#pragma once

#include "pdd/cli/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace pdd::cli {

/// Sample streams derived from the run seed; disjoint from the per-iteration streams.
inline constexpr std::uint64_t kEvaluationStream = std::uint64_t{1} << 42;
inline constexpr std::uint64_t kStartStream = std::uint64_t{1} << 43;
inline constexpr std::uint64_t kReportStream = std::uint64_t{1} << 44;

[[nodiscard]] std::string version();

/// Seeded sample set shared by the final evaluation and the baselines.
[[nodiscard]] std::vector<State> evaluation_set(const RunConfig& config);

struct ExperimentSetup {
    ProblemDefinition problem;
    SolverPtr short_term;
    LongTermIterate start;
};

[[nodiscard]] ExperimentSetup build_experiment(const RunConfig& config);

struct RunOutput {
    RunResult result;
    nlohmann::json summary;  // contents of final.json
};

[[nodiscard]] RunOutput run_experiment(const RunConfig& config);

/// trace.csv contents: provenance comment lines, then iter,rho,gamma,objective,max_constraint,mode,millis.
/// The cmac objective column is the capacity tracker -f_0.
[[nodiscard]] std::string trace_csv(const RunConfig& config, const std::vector<TraceRecord>& trace);

/// Dual-ellipsoid and short-term-constraint baselines on the evaluation set (cmac only).
[[nodiscard]] nlohmann::json run_baselines(const RunConfig& config);

/// KKT report of a saved final iterate on a fresh batch.
[[nodiscard]] nlohmann::json recompute_report(const RunConfig& config, const nlohmann::json& final_summary);

struct GradientCheck {
    double wmmse_worst = 0.0;
    double cmac_worst = 0.0;
    int wmmse_instances = 20;
    int cmac_instances = 50;
};

/// Unrolled WMMSE (M = 8, S = K = 2, J = 5) and the CMAC closed form against central differences.
[[nodiscard]] GradientCheck check_gradients(std::uint64_t seed, double rel_step = 1e-6);

/// Command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace pdd::cli
