#include "pdd/longterm.hpp"

#include "pdd/unroll.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace pdd {

std::string to_string(UpdateMode mode) { return mode == UpdateMode::objective ? "objective" : "feasibility"; }

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int w = std::clamp(workers, 1, n);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    auto body = [&](int start) {
        for (int k = start; k < n; k += w) {
            try {
                fn(k);
            } catch (...) {
                errors[static_cast<std::size_t>(k)] = std::current_exception();
            }
        }
    };
    if (w == 1) {
        body(0);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(w));
        for (int s = 0; s < w; ++s) pool.emplace_back(body, s);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

Rng iteration_rng(std::uint64_t seed, std::uint64_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    return Rng(seq);
}

ConvexUpdate solve_convex_update(const SurrogateModel& objective, const std::vector<SurrogateModel>& constraints,
                                 const Box& box, const Vector& start, const BarrierOptions& options,
                                 double feas_tolerance) {
    ConvexProgram program;
    program.objective = objective.as_function();
    program.box = box;
    for (const SurrogateModel& c : constraints) program.constraints.push_back(c.as_function());
    const Vector z0 = box.interior(start);

    ConvexUpdate out;
    if (program.constraints.empty()) {
        out.z = polish_active_set(program, minimize_barrier(program, z0, options)).z;
        out.alpha = -std::numeric_limits<double>::infinity();
        return out;
    }
    BarrierOptions phase = options;
    phase.phase_margin = feas_tolerance;
    const PhaseOneOutcome p1 = phase_one(program, z0, phase);
    out.alpha = p1.solution.alpha;
    if (p1.feasible) {
        out.z = polish_active_set(program, minimize_barrier(program, p1.solution.z, options)).z;
        out.mode = UpdateMode::objective;
    } else {
        out.z = p1.solution.z;
        out.mode = UpdateMode::feasibility;
    }
    return out;
}

LongTermSolver::LongTermSolver(ProblemDefinition problem, SolverPtr short_term, SolverConfig config)
    : problem_(std::move(problem)), short_term_(std::move(short_term)), config_(std::move(config)) {
    problem_.validate();
    if (!short_term_) throw InvalidInput("LongTermSolver: short-term solver is required");
    if (short_term_->n_x() != problem_.n_x || short_term_->n_lambda() != problem_.m ||
        short_term_->n_y() != problem_.n_y) {
        throw InvalidInput("LongTermSolver: short-term solver dimensions do not match the problem");
    }
    if (config_.batch < 1) throw InvalidInput("LongTermSolver: batch must be >= 1");
    if (config_.max_iters < 0) throw InvalidInput("LongTermSolver: max_iters must be >= 0");
    if (!(config_.feas_tolerance > 0.0) || !(config_.stop_tolerance > 0.0)) {
        throw InvalidInput("LongTermSolver: tolerances must be positive");
    }
    if (config_.stop_window < 1) throw InvalidInput("LongTermSolver: stop_window must be >= 1");
    if (config_.workers < 1) throw InvalidInput("LongTermSolver: workers must be >= 1");
    if (config_.eval_batch < 1) throw InvalidInput("LongTermSolver: eval_batch must be >= 1");
    if (config_.tau.size() == 0) config_.tau = Vector::Ones(problem_.m + 1);
    if (config_.tau.size() != problem_.m + 1) throw InvalidInput("LongTermSolver: tau needs m + 1 entries");
    if ((config_.tau.array() <= 0.0).any()) throw InvalidInput("LongTermSolver: tau must be positive");
}

std::vector<std::vector<SampleStatistics>> LongTermSolver::batch_statistics(const LongTermIterate& iterate,
                                                                            const std::vector<State>& states,
                                                                            std::vector<Vector>* ys,
                                                                            int* flagged) const {
    const int B = static_cast<int>(states.size());
    const int m = problem_.m;
    std::vector<std::vector<SampleStatistics>> stats(static_cast<std::size_t>(m + 1),
                                                     std::vector<SampleStatistics>(static_cast<std::size_t>(B)));
    std::vector<Vector> y_out(static_cast<std::size_t>(B));
    std::vector<char> flags(static_cast<std::size_t>(B), 0);
    parallel_for(B, config_.workers, [&](int j) {
        const auto [res, tape] = run_short_term(problem_, short_term_, iterate.x, iterate.lambda, states[j]);
        for (int i = 0; i <= m; ++i) {
            const ThroughGradient g = grad_through(problem_, i, res, tape);
            SampleStatistics& s = stats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            s.value = g.value;
            s.grad_x = g.partial_x;
            s.pushed_x = g.pushed_x;
            s.grad_lambda = g.lambda;
            if (problem_.convex_part) {
                const ConvexPartEval c = problem_.convex_part(i, iterate.x, res.y, states[j]);
                s.convex_value = c.value;
                s.convex_grad_x = c.grad_x;
            }
        }
        y_out[static_cast<std::size_t>(j)] = res.y;
        flags[static_cast<std::size_t>(j)] = res.flagged ? 1 : 0;
    });
    if (ys) *ys = std::move(y_out);
    if (flagged) *flagged = std::accumulate(flags.begin(), flags.end(), 0);
    return stats;
}

RunResult LongTermSolver::evaluate(const LongTermIterate& iterate, std::uint64_t stream) const {
    Rng rng = iteration_rng(config_.seed, stream);
    std::vector<State> states;
    states.reserve(static_cast<std::size_t>(config_.eval_batch));
    for (int j = 0; j < config_.eval_batch; ++j) states.push_back(problem_.sampler(rng));

    std::vector<ShortTermResult> results(states.size());
    parallel_for(static_cast<int>(states.size()), config_.workers, [&](int j) {
        results[static_cast<std::size_t>(j)] =
            run_short_term(problem_, short_term_, iterate.x, iterate.lambda, states[j]).first;
    });

    RunResult out;
    out.iterate = iterate;
    out.saa_values = Vector::Zero(problem_.m + 1);
    for (std::size_t j = 0; j < states.size(); ++j) {
        for (int i = 0; i <= problem_.m; ++i) {
            out.saa_values[i] += evaluate_sample(problem_, i, iterate.x, results[j].y, states[j]).value;
        }
        if (results[j].flagged) ++out.flagged_solves;
    }
    out.saa_values /= static_cast<double>(states.size());

    // The report needs nu for every sample when n > 0; solvers without multipliers report zeros.
    if (problem_.n > 0) {
        for (auto& r : results) {
            if (!r.nu) r.nu = Vector::Zero(problem_.n);
        }
    }
    out.kkt = kkt_report(problem_, iterate, results, states, out.saa_values.tail(problem_.m));
    out.slater_margin = problem_.m == 0 ? std::numeric_limits<double>::infinity()
                                        : -out.saa_values.tail(problem_.m).maxCoeff();
    return out;
}

RunResult LongTermSolver::run(const LongTermIterate& start) const {
    const int m = problem_.m;
    const int nx = problem_.n_x;
    if (start.x.size() != nx || start.lambda.size() != m) {
        throw InvalidInput("LongTermSolver::run: start iterate has the wrong dimensions");
    }
    const Box lambda_box = problem_.multiplier_box();
    const Box z_box = concat(problem_.domain_x, lambda_box);

    LongTermIterate it{problem_.domain_x.project(start.x), lambda_box.project(start.lambda), 0};
    std::vector<SurrogateTracker> trackers;
    for (int i = 0; i <= m; ++i) trackers.emplace_back(nx, m, config_.tau[i]);

    std::vector<TraceRecord> trace;
    trace.reserve(static_cast<std::size_t>(config_.max_iters));
    std::vector<double> movement;
    bool converged = false;
    bool clamp_active = false;
    int flagged_total = 0;
    UpdateMode last_mode = UpdateMode::objective;

    for (int t = 0; t < config_.max_iters; ++t) {
        const auto clock_start = std::chrono::steady_clock::now();
        const StepValues step = step_values(config_.schedule, t);

        Rng rng = iteration_rng(config_.seed, static_cast<std::uint64_t>(t));
        std::vector<State> states;
        states.reserve(static_cast<std::size_t>(config_.batch));
        for (int j = 0; j < config_.batch; ++j) states.push_back(problem_.sampler(rng));

        std::vector<Vector> ys;
        int flagged = 0;
        const auto stats = batch_statistics(it, states, &ys, &flagged);
        flagged_total += flagged;

        std::vector<SurrogateModel> models;
        models.reserve(static_cast<std::size_t>(m + 1));
        for (int i = 0; i <= m; ++i) {
            update_trackers(trackers[static_cast<std::size_t>(i)], step.rho, stats[static_cast<std::size_t>(i)]);
            ConvexTerms terms;
            if (problem_.convex_part) terms = ConvexTerms{problem_.convex_part, i, ys, states};
            models.push_back(build_surrogate(trackers[static_cast<std::size_t>(i)], it, step.rho,
                                             stats[static_cast<std::size_t>(i)], std::move(terms)));
        }

        Vector z_t(nx + m);
        z_t << it.x, it.lambda;
        const std::vector<SurrogateModel> constraints(models.begin() + 1, models.end());
        const ConvexUpdate upd = solve_convex_update(models[0], constraints, z_box, z_t, config_.barrier,
                                                     config_.feas_tolerance);
        last_mode = upd.mode;

        const Vector z_next = z_box.project((1.0 - step.gamma) * z_t + step.gamma * upd.z);
        const Vector x_next = z_next.head(nx);
        const Vector l_next = z_next.tail(m);
        movement.push_back((x_next - it.x).norm() + (l_next - it.lambda).norm());
        clamp_active = m > 0 && (l_next.array() >= problem_.lambda_cap * (1.0 - 1e-9)).any();
        it = LongTermIterate{x_next, l_next, t + 1};

        TraceRecord rec;
        rec.iter = t;
        rec.rho = step.rho;
        rec.gamma = step.gamma;
        rec.objective = trackers[0].f;
        rec.max_constraint = -std::numeric_limits<double>::infinity();
        for (int i = 1; i <= m; ++i) rec.max_constraint = std::max(rec.max_constraint, trackers[i].f);
        rec.mode = upd.mode;
        if (config_.record_timing) {
            rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - clock_start)
                             .count();
        }
        trace.push_back(rec);

        const auto w = static_cast<std::size_t>(config_.stop_window);
        if (movement.size() >= w &&
            std::accumulate(movement.end() - static_cast<std::ptrdiff_t>(w), movement.end(), 0.0) <=
                config_.stop_tolerance) {
            converged = true;
            break;
        }
    }

    RunResult out = evaluate(it, std::uint64_t{1} << 40);
    out.trace = std::move(trace);
    out.converged = converged;
    out.lambda_clamp_active = clamp_active;
    out.infeasible_trajectory = !out.trace.empty() && last_mode == UpdateMode::feasibility;
    out.flagged_solves += flagged_total;
    return out;
}

}  // namespace pdd
