#include "pdd/unroll.hpp"

#include <algorithm>
#include <cmath>

namespace pdd {

TapeAdjoint vjp(const UnrollTape& tape, const Vector& cotangent) {
    if (!tape.solver) throw InvalidInput("vjp: tape has no solver");
    if (tape.layer_states.empty() || tape.caches.size() + 1 != tape.layer_states.size()) {
        throw InvalidInput("vjp: malformed tape");
    }
    if (cotangent.size() != tape.layer_states.back().size()) throw InvalidInput("vjp: cotangent dimension mismatch");
    if (!cotangent.allFinite()) throw InvalidInput("vjp: cotangent is not finite");

    const ShortTermSolver& solver = *tape.solver;
    const LayerContext& ctx = tape.context;
    TapeAdjoint out{Vector::Zero(ctx.x.size()), Vector::Zero(ctx.lambda.size())};
    Vector bar = cotangent;
    for (int j = tape.layers(); j >= 1; --j) {
        const auto idx = static_cast<std::size_t>(j);
        const LayerAdjoint adj =
            solver.layer_vjp(j, ctx, tape.layer_states[idx - 1], tape.layer_states[idx], tape.caches[idx - 1], bar);
        out.x += adj.x;
        out.lambda += adj.lambda;
        bar = adj.y_prev;
    }
    const LayerAdjoint init = solver.initial_vjp(ctx, bar);
    out.x += init.x;
    out.lambda += init.lambda;
    return out;
}

ThroughGradient grad_through(const ProblemDefinition& problem, int i, const ShortTermResult& result,
                             const UnrollTape& tape) {
    const LayerContext& ctx = tape.context;
    const SampleEval e = evaluate_sample(problem, i, ctx.x, result.y, ctx.xi);
    ThroughGradient g;
    g.value = e.value;
    g.partial_x = e.grad_x;
    if (e.grad_y.isZero(0.0)) {
        g.pushed_x = Vector::Zero(ctx.x.size());
        g.lambda = Vector::Zero(ctx.lambda.size());
        return g;
    }
    const TapeAdjoint adj = vjp(tape, e.grad_y);
    g.pushed_x = adj.x;
    g.lambda = adj.lambda;
    return g;
}

FiniteDifferenceGradient fd_oracle(const ProblemDefinition& problem, int i, const SolverPtr& solver, const Vector& x,
                                   const Vector& lambda, const State& xi, double rel_step) {
    auto value = [&](const Vector& xx, const Vector& ll) {
        const auto [res, tape] = run_short_term(problem, solver, xx, ll, xi);
        return evaluate_sample(problem, i, xx, res.y, xi).value;
    };
    FiniteDifferenceGradient out{Vector(x.size()), Vector(lambda.size())};
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = rel_step * (1.0 + std::abs(x[k]));
        Vector p = x;
        Vector q = x;
        p[k] += h;
        q[k] -= h;
        out.x[k] = (value(p, lambda) - value(q, lambda)) / (2.0 * h);
    }
    for (Eigen::Index k = 0; k < lambda.size(); ++k) {
        const double h = rel_step * (1.0 + std::abs(lambda[k]));
        Vector p = lambda;
        Vector q = lambda;
        p[k] += h;
        q[k] -= h;
        out.lambda[k] = (value(x, p) - value(x, q)) / (2.0 * h);
    }
    return out;
}

double max_relative_error(const Vector& got, const Vector& want, double floor) {
    if (got.size() != want.size()) throw InvalidInput("max_relative_error: length mismatch");
    double worst = 0.0;
    for (Eigen::Index k = 0; k < want.size(); ++k) {
        const double diff = std::abs(got[k] - want[k]);
        const double scale = std::abs(want[k]);
        worst = std::max(worst, scale < floor ? diff : diff / scale);
    }
    return worst;
}

bool replay(const UnrollTape& tape) {
    if (!tape.solver || tape.layer_states.empty()) return false;
    const Vector y0 = tape.solver->initial(tape.context);
    if (y0.size() != tape.layer_states[0].size() || y0 != tape.layer_states[0]) return false;
    Vector y = y0;
    for (int j = 1; j <= tape.layers(); ++j) {
        y = tape.solver->layer(j, tape.context, y).y;
        const Vector& recorded = tape.layer_states[static_cast<std::size_t>(j)];
        if (y.size() != recorded.size() || y != recorded) return false;
    }
    return true;
}

}  // namespace pdd
