#pragma once

#include "pdd/convex.hpp"
#include "pdd/shortterm.hpp"

#include <string>
#include <vector>

namespace pdd::cmac {

enum class GainLaw { exponential, gamma };

[[nodiscard]] GainLaw parse_gain_law(const std::string& name);

/// Cognitive multiple-access channel: N secondary users under long-term power budgets P and a primary-user
/// interference threshold Gamma. Long-term variables are the multipliers (lambda_1 ... lambda_N, Upsilon).
struct Instance {
    int N = 2;
    double P_db = 5.0;
    double Gamma = 0.5;
    GainLaw law = GainLaw::exponential;
    double gain_mean = 1.0;
    double gain_shape = 2.0;  // gamma law only
    double power_cap = 1e6;   // domain of p and the guard value of the closed form

    void validate() const;
    [[nodiscard]] double P() const;
};

[[nodiscard]] double db_to_linear(double db);

/// State xi = (a_1 ... a_N, b_1 ... b_N).
[[nodiscard]] State sample(const Instance& inst, Rng& rng);

/// g_0 = -log(1 + a.p), g_i = p_i - P, g_{N+1} = b.p - Gamma; n_x = 0, y = p, m = N + 1.
[[nodiscard]] ProblemDefinition problem(const Instance& inst);

/// Closed-form short-term map p*(lambda, Upsilon, a, b) as a single layer.
[[nodiscard]] SolverPtr solver(const Instance& inst);

[[nodiscard]] double capacity(const State& xi, const Vector& p);

/// Mean capacity and constraint residuals (E p_i - P, E b.p - Gamma) of the closed-form policy on a sample set.
struct PolicyValue {
    double capacity = 0.0;
    Vector residuals;
    [[nodiscard]] double max_violation() const;
};

[[nodiscard]] PolicyValue evaluate_policy(const Instance& inst, const Vector& multipliers,
                                          const std::vector<State>& samples);

struct EllipsoidOptions {
    double center = 1.0;
    double radius = 10.0;
    double volume_tolerance = 1e-10;
    int max_iters = 100000;
    int max_restarts = 5;
};

struct EllipsoidResult {
    Vector multipliers;        // (lambda, Upsilon) with the best dual value seen
    double dual_value = 0.0;
    PolicyValue policy;
    int iterations = 0;
    int restarts = 0;
    double volume = 0.0;
    double slackness = 0.0;  // max_k |mu_k r_k| over the sample-average residuals r
};

/// Dual ellipsoid method on the sample-average dual of the separable closed-form subproblem.
[[nodiscard]] EllipsoidResult dual_ellipsoid_baseline(const Instance& inst, const std::vector<State>& samples,
                                                      const EllipsoidOptions& options = {});

/// Per-state capacity maximization with 0 <= p_i <= P and b.p <= Gamma.
[[nodiscard]] Vector short_term_constraint_baseline(const Instance& inst, const State& xi);

[[nodiscard]] double short_term_constraint_capacity(const Instance& inst, const std::vector<State>& samples);

}  // namespace pdd::cmac
