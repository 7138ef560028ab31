#pragma once

#include "pdd/core.hpp"

#include <functional>
#include <vector>

namespace pdd {

/// A twice-differentiable convex function; eval fills grad and hess when the pointers are non-null.
struct SmoothFunction {
    std::function<double(const Vector& z, Vector* grad, Matrix* hess)> eval;

    double operator()(const Vector& z, Vector* grad = nullptr, Matrix* hess = nullptr) const {
        return eval(z, grad, hess);
    }
};

/// min objective(z) s.t. constraints_i(z) <= 0, z in box (every box width must be positive).
struct ConvexProgram {
    SmoothFunction objective;
    std::vector<SmoothFunction> constraints;
    Box box;
};

struct BarrierOptions {
    double gap_tolerance = 1e-8;
    double phase_margin = 1e-9;
    double growth = 10.0;
    double initial_t = 1.0;
    double newton_tolerance = 1e-11;
    int max_newton_steps = 2000;
};

struct BarrierSolution {
    Vector z;
    Vector multipliers;  // one per constraint
    Vector box_lower;    // multipliers of z >= lower
    Vector box_upper;    // multipliers of z <= upper
    double objective = 0.0;
    double gap = 0.0;
    int newton_steps = 0;
};

/// Log-barrier interior point with damped Newton centering; `start` must be strictly feasible.
[[nodiscard]] BarrierSolution minimize_barrier(const ConvexProgram& program, const Vector& start,
                                               const BarrierOptions& options = {});

struct MaxConstraintSolution {
    Vector z;
    double alpha = 0.0;  // achieved max_i f_i(z)
    Vector weights;      // multipliers of f_i(z) <= alpha, summing to one
    int newton_steps = 0;
};

/// Epigraph problem min alpha s.t. f_i(z) <= alpha, z in box. Requires at least one function.
[[nodiscard]] MaxConstraintSolution minimize_max_constraint(const std::vector<SmoothFunction>& functions,
                                                            const Box& box, const Vector& start,
                                                            const BarrierOptions& options = {});

/// Phase-I for `program`: feasible is set when the epigraph optimum satisfies alpha <= -phase_margin.
struct PhaseOneOutcome {
    bool feasible = false;
    MaxConstraintSolution solution;
};

[[nodiscard]] PhaseOneOutcome phase_one(const ConvexProgram& program, const Vector& start,
                                        const BarrierOptions& options = {});

/// Exact KKT point on the active set identified from a barrier solution.
struct ActiveSetSolution {
    Vector z;
    Vector multipliers;                           // zero for inactive constraints
    Eigen::Array<bool, Eigen::Dynamic, 1> free;   // coordinates not clamped to a box face
    std::vector<int> active;                      // constraints treated as equalities
};

/// Newton refinement of the KKT system restricted to the active set; falls back to the barrier
/// point (with its active set) when the refined point fails the sign and feasibility checks.
[[nodiscard]] ActiveSetSolution polish_active_set(const ConvexProgram& program, const BarrierSolution& barrier);

/// Convex quadratic q(z) = c + g^T (z - z0) + 0.5 (z - z0)^T H (z - z0).
[[nodiscard]] SmoothFunction quadratic_function(double c, Vector g, Matrix hess, Vector z0);

}  // namespace pdd
