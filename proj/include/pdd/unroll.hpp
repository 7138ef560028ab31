#pragma once

#include "pdd/shortterm.hpp"
#include "pdd/tape.hpp"

namespace pdd {

struct TapeAdjoint {
    Vector x;
    Vector lambda;
};

/// Reverse sweep through the tape: returns (d y^J / d x)^T v and (d y^J / d lambda)^T v.
[[nodiscard]] TapeAdjoint vjp(const UnrollTape& tape, const Vector& cotangent);

/// Total derivatives of g_i(x, y^J(x, lambda, xi), xi).
struct ThroughGradient {
    double value = 0.0;
    Vector partial_x;  // d_x g_i with y held fixed
    Vector pushed_x;   // (d_x y^J)^T d_y g_i
    Vector lambda;     // (d_lambda y^J)^T d_y g_i
    [[nodiscard]] Vector total_x() const { return partial_x + pushed_x; }
};

[[nodiscard]] ThroughGradient grad_through(const ProblemDefinition& problem, int i, const ShortTermResult& result,
                                           const UnrollTape& tape);

/// Central differences of g_i(x, y^J(x, lambda, xi), xi) in every coordinate of x and lambda.
struct FiniteDifferenceGradient {
    Vector x;
    Vector lambda;
};

[[nodiscard]] FiniteDifferenceGradient fd_oracle(const ProblemDefinition& problem, int i, const SolverPtr& solver,
                                                 const Vector& x, const Vector& lambda, const State& xi,
                                                 double rel_step = 1e-6);

/// max_k |got_k - want_k| / |want_k|, compared absolutely where |want_k| < floor.
[[nodiscard]] double max_relative_error(const Vector& got, const Vector& want, double floor = 1e-8);

/// Recomputes every layer from y^0 and reports whether the recorded states are reproduced bitwise.
[[nodiscard]] bool replay(const UnrollTape& tape);

}  // namespace pdd
