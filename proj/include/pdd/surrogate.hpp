#pragma once

#include "pdd/convex.hpp"
#include "pdd/core.hpp"

#include <span>
#include <vector>

namespace pdd {

/// Per-sample quantities feeding the trackers of one function g_i.
struct SampleStatistics {
    double value = 0.0;          // g_i(x, y^J, xi)
    Vector grad_x;               // partial d_x g_i with y fixed
    Vector pushed_x;             // (d_x y^J)^T d_y g_i
    Vector grad_lambda;          // (d_lambda y^J)^T d_y g_i
    double convex_value = 0.0;   // g_i^c(x, y^J, xi)
    Vector convex_grad_x;        // d_x g_i^c; empty when g_i^c == 0
};

/// Recursive trackers of one function; `previous_*` hold the values before the latest update.
struct SurrogateTracker {
    double f = 0.0;
    Vector fx;
    Vector fy;
    Vector flambda;
    double tau = 1.0;
    double previous_f = 0.0;
    Vector previous_fx;

    SurrogateTracker() = default;
    SurrogateTracker(int n_x, int m, double tau);
};

/// f^t = (1 - rho) f^{t-1} + rho mean(batch), and likewise for the three gradient trackers.
void update_trackers(SurrogateTracker& tracker, double rho, std::span<const SampleStatistics> batch);

/// Sample convex components retained in the surrogate with weight rho / B each.
struct ConvexTerms {
    ConvexPartFn fn;
    int index = 0;
    std::vector<Vector> y;
    std::vector<State> xi;
};

/// Strongly convex surrogate in z = (x, lambda):
/// constant + lin_x^T (x - x^t) + lin_lambda^T (lambda - lambda^t) + tau |z - z^t|^2 + (rho / B) sum_j g^c(x, y_j, xi_j).
struct SurrogateModel {
    LongTermIterate anchor;
    double constant = 0.0;
    Vector lin_x;
    Vector lin_lambda;
    double tau = 1.0;
    double convex_weight = 0.0;
    ConvexTerms convex_terms;

    [[nodiscard]] double evaluate(const Vector& x, const Vector& lambda, Vector* grad = nullptr,
                                  Matrix* hess = nullptr) const;
    [[nodiscard]] SmoothFunction as_function() const;
};

/// Assembles the surrogate after `update_trackers` ran on `batch` for iteration t.
[[nodiscard]] SurrogateModel build_surrogate(const SurrogateTracker& tracker, const LongTermIterate& anchor, double rho,
                                             std::span<const SampleStatistics> batch, ConvexTerms convex_terms = {});

}  // namespace pdd
