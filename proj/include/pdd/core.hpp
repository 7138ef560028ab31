#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// A realization of the random state, flattened to a real vector.
using State = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Raised for malformed inputs: bad dimensions, indices, or configuration.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot deliver a result it promised.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned box with finite bounds (compact and convex).
class Box {
public:
    Box() = default;
    Box(Vector lower, Vector upper);

    static Box uniform(Eigen::Index n, double lower, double upper);

    [[nodiscard]] Eigen::Index size() const { return lower_.size(); }
    [[nodiscard]] const Vector& lower() const { return lower_; }
    [[nodiscard]] const Vector& upper() const { return upper_; }

    [[nodiscard]] bool contains(const Vector& v, double tol = 0.0) const;
    [[nodiscard]] Vector project(const Vector& v) const;
    [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }
    /// Moves v at least `margin` (relative to the box width, capped at `cap`) inside the box.
    [[nodiscard]] Vector interior(const Vector& v, double margin = 1e-6, double cap = 1e-3) const;

    friend Box concat(const Box& a, const Box& b);

private:
    Vector lower_;
    Vector upper_;
};

/// Value and partial derivatives of one sample function g_i(x, y, xi), with y held fixed for the x-derivative.
struct SampleEval {
    double value = 0.0;
    Vector grad_x;
    Vector grad_y;
};

/// Second-order products for the sample function: d/dy and d/dx of <grad_y g_i, w>.
struct CurvatureProduct {
    Vector yy;
    Vector xy;
};

struct ConstraintEval {
    double value = 0.0;
    Vector grad_y;
};

/// The convex component g_i^c of a split sample function, differentiated in x.
struct ConvexPartEval {
    double value = 0.0;
    Vector grad_x;
    Matrix hess_xx;
};

using SampleFn = std::function<SampleEval(int i, const Vector& x, const Vector& y, const State& xi)>;
using SampleCurvatureFn =
    std::function<CurvatureProduct(int i, const Vector& x, const Vector& y, const State& xi, const Vector& w)>;
using ShortFn = std::function<ConstraintEval(int j, const Vector& y, const State& xi)>;
using ShortCurvatureFn = std::function<Vector(int j, const Vector& y, const State& xi, const Vector& w)>;
using ConvexPartFn = std::function<ConvexPartEval(int i, const Vector& x, const Vector& y, const State& xi)>;
using Sampler = std::function<State(Rng&)>;

/// The two-stage stochastic problem: objective g_0 and m long-term constraints g_i
/// coupling x with the per-state decision y(xi), plus n short-term constraints h_j(y, xi) <= 0.
struct ProblemDefinition {
    int n_x = 0;
    int n_y = 0;
    int m = 0;
    int n = 0;
    Box domain_x;
    Box domain_y;
    double lambda_cap = 1e4;

    SampleFn sample_fn;
    SampleCurvatureFn sample_curvature;  // optional; central differences of sample_fn otherwise
    ShortFn short_fn;                    // required iff n > 0
    ShortCurvatureFn short_curvature;    // optional
    ConvexPartFn convex_part;            // optional; absent means g_i^c == 0
    Sampler sampler;

    void validate() const;
    [[nodiscard]] Box multiplier_box() const { return Box::uniform(m, 0.0, lambda_cap); }
};

[[nodiscard]] SampleEval evaluate_sample(const ProblemDefinition& problem, int i, const Vector& x, const Vector& y,
                                         const State& xi);

[[nodiscard]] CurvatureProduct sample_curvature(const ProblemDefinition& problem, int i, const Vector& x,
                                                const Vector& y, const State& xi, const Vector& w);

[[nodiscard]] ConstraintEval evaluate_short_constraint(const ProblemDefinition& problem, int j, const Vector& y,
                                                       const State& xi);

[[nodiscard]] Matrix short_constraint_hessian(const ProblemDefinition& problem, int j, const Vector& y,
                                              const State& xi);

/// Gradient in y of g_s = g_0 + sum_i lambda_i g_i.
[[nodiscard]] Vector lagrangian_grad_y(const ProblemDefinition& problem, const Vector& x, const Vector& lambda,
                                       const Vector& y, const State& xi);

/// d/dy and d/dx of <grad_y g_s, w>.
[[nodiscard]] CurvatureProduct lagrangian_curvature(const ProblemDefinition& problem, const Vector& x,
                                                    const Vector& lambda, const Vector& y, const State& xi,
                                                    const Vector& w);

struct LongTermIterate {
    Vector x;
    Vector lambda;
    int t = 0;
};

/// rho^t = rho_scale / (rho_shift + t)^rho_exponent, gamma^t = gamma_scale / (gamma_shift + t), both clipped to 1.
struct StepSchedule {
    double rho_scale = 10.0;
    double rho_shift = 10.0;
    double rho_exponent = 0.9;
    double gamma_scale = 15.0;
    double gamma_shift = 15.0;
};

struct StepValues {
    double rho = 1.0;
    double gamma = 1.0;
};

[[nodiscard]] StepValues step_values(const StepSchedule& schedule, int t);

/// KKT error magnitudes of a finite-iteration short-term solve.
struct ShortTermKkt {
    double stationarity = 0.0;  // e_1
    double feasibility = 0.0;   // e_2, max_j h_j (0 when n == 0)
    double slackness = 0.0;     // max_j |nu_j h_j|
};

struct ShortTermResult {
    Vector y;
    std::optional<Vector> nu;
    ShortTermKkt kkt_errors;
    bool flagged = false;  // a layer hit a numerical guard (division, singular system, infeasible fallback)
};

/// Short-term KKT errors of y for the given multipliers; box faces of domain_y are handled by projection.
[[nodiscard]] ShortTermKkt short_term_kkt(const ProblemDefinition& problem, const Vector& x, const Vector& lambda,
                                          const Vector& y, const std::optional<Vector>& nu, const State& xi);

struct KktReport {
    double stationarity_short = 0.0;
    double feasibility_short = 0.0;
    double slackness_short = 0.0;
    double stationarity_long = 0.0;
    Vector feasibility_long;
    double slackness_long = 0.0;
};

[[nodiscard]] KktReport kkt_report(const ProblemDefinition& problem, const LongTermIterate& iterate,
                                   std::span<const ShortTermResult> results, std::span<const State> states,
                                   const Vector& saa_f);

}  // namespace pdd
