#pragma once

#include "pdd/convex.hpp"
#include "pdd/shortterm.hpp"
#include "pdd/surrogate.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pdd {

struct SolverConfig {
    int batch = 20;
    int max_iters = 1000;
    StepSchedule schedule;
    double feas_tolerance = 1e-9;  // phase-I margin below which the objective update runs
    double stop_tolerance = 1e-6;  // summed iterate movement over the last `stop_window` iterations
    int stop_window = 10;
    std::uint64_t seed = 0;
    int workers = 1;
    Vector tau;             // one per function g_0 ... g_m; empty means all 1
    int eval_batch = 200;   // fresh samples for the final KKT report
    bool record_timing = true;
    BarrierOptions barrier;
};

enum class UpdateMode { objective, feasibility };

[[nodiscard]] std::string to_string(UpdateMode mode);

struct TraceRecord {
    int iter = 0;
    double rho = 0.0;
    double gamma = 0.0;
    double objective = 0.0;       // f_0 tracker
    double max_constraint = 0.0;  // max_i f_i tracker (-inf when m == 0)
    UpdateMode mode = UpdateMode::objective;
    double millis = 0.0;
};

struct RunResult {
    LongTermIterate iterate;
    std::vector<TraceRecord> trace;
    KktReport kkt;
    Vector saa_values;          // mean g_i over the evaluation batch at the final iterate, i = 0 ... m
    double slater_margin = 0.0; // min_i (-saa_values[i]), +inf when m == 0
    bool infeasible_trajectory = false;
    bool lambda_clamp_active = false;
    bool converged = false;     // stopped by the movement rule before max_iters
    int flagged_solves = 0;     // short-term solves that hit a numerical guard
};

/// Outcome of the convex update of one outer iteration.
struct ConvexUpdate {
    Vector z;  // (x_bar, lambda_bar)
    UpdateMode mode = UpdateMode::objective;
    double alpha = 0.0;  // phase-I value (max surrogate constraint)
};

/// Objective update when phase-I certifies a strictly feasible point, feasibility update otherwise.
[[nodiscard]] ConvexUpdate solve_convex_update(const SurrogateModel& objective,
                                               const std::vector<SurrogateModel>& constraints, const Box& box,
                                               const Vector& start, const BarrierOptions& options = {},
                                               double feas_tolerance = 1e-9);

/// Runs `fn(k)` for k = 0 ... n - 1 on `workers` threads; rethrows the exception of the lowest failing index.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Deterministic per-iteration generator seeded from (seed, t).
[[nodiscard]] Rng iteration_rng(std::uint64_t seed, std::uint64_t t);

/// The full stochastic successive convex approximation loop.
class LongTermSolver {
public:
    LongTermSolver(ProblemDefinition problem, SolverPtr short_term, SolverConfig config);

    [[nodiscard]] RunResult run(const LongTermIterate& start) const;

    /// Per-sample statistics of g_0 ... g_m at the iterate for the given states (index [i][j]).
    [[nodiscard]] std::vector<std::vector<SampleStatistics>> batch_statistics(const LongTermIterate& iterate,
                                                                              const std::vector<State>& states,
                                                                              std::vector<Vector>* ys = nullptr,
                                                                              int* flagged = nullptr) const;

    /// KKT report, SAA values and Slater margin on a fresh batch.
    [[nodiscard]] RunResult evaluate(const LongTermIterate& iterate, std::uint64_t stream) const;

    [[nodiscard]] const ProblemDefinition& problem() const { return problem_; }
    [[nodiscard]] const SolverConfig& config() const { return config_; }

private:
    ProblemDefinition problem_;
    SolverPtr short_term_;
    SolverConfig config_;
};

}  // namespace pdd
