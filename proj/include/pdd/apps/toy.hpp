#pragma once

#include "pdd/core.hpp"
#include "pdd/shortterm.hpp"

namespace pdd::toy {

/// Separable convex toy without long-term constraints: y = x - xi in closed form,
/// g_0 = |y|^2 + |x - c|^2 with xi ~ N(mean, noise^2 I), so the optimum is x = (mean + c) / 2.
struct Instance {
    int dim = 2;
    double mean = 1.0;
    double target = 0.0;  // every entry of c
    double noise = 0.02;
    double box = 5.0;

    void validate() const;
};

[[nodiscard]] ProblemDefinition problem(const Instance& inst);
[[nodiscard]] SolverPtr solver(const Instance& inst);
[[nodiscard]] Vector optimum(const Instance& inst);

}  // namespace pdd::toy
