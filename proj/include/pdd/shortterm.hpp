#pragma once

#include "pdd/core.hpp"

#include <any>
#include <complex>
#include <memory>
#include <string>
#include <vector>

namespace pdd {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// The point (x, lambda, xi) a short-term solve is parameterized by.
struct LayerContext {
    Vector x;
    Vector lambda;
    State xi;
};

/// Adjoints of one layer map with respect to its inputs.
struct LayerAdjoint {
    Vector y_prev;
    Vector x;
    Vector lambda;
};

/// Output of one forward layer: the new state, a cache for the reverse pass, and a guard flag.
struct LayerOutput {
    Vector y;
    std::any cache;
    bool flagged = false;
};

/// A short-term sub-algorithm: an initializer y^0(x, lambda, xi) and J layer maps
/// y^j = A^j(y^{j-1}, x, lambda, xi), each with a hand-derived vector-Jacobian product.
class ShortTermSolver {
public:
    virtual ~ShortTermSolver() = default;

    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual int layers() const = 0;
    [[nodiscard]] virtual int n_x() const = 0;
    [[nodiscard]] virtual int n_lambda() const = 0;
    [[nodiscard]] virtual int n_y() const = 0;

    [[nodiscard]] virtual Vector initial(const LayerContext& ctx) const = 0;
    /// Default: the initializer does not read (x, lambda).
    [[nodiscard]] virtual LayerAdjoint initial_vjp(const LayerContext& ctx, const Vector& bar_y0) const;

    [[nodiscard]] virtual LayerOutput layer(int j, const LayerContext& ctx, const Vector& y_prev) const = 0;
    [[nodiscard]] virtual LayerAdjoint layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev,
                                                 const Vector& y, const std::any& cache,
                                                 const Vector& bar_y) const = 0;

    /// Short-term multipliers nu recovered from the final layer; nullopt when the solver has none.
    [[nodiscard]] virtual std::optional<Vector> multipliers(const LayerContext& ctx, const Vector& y_prev,
                                                            const Vector& y, const std::any& cache) const;
};

using SolverPtr = std::shared_ptr<const ShortTermSolver>;

// ---------------------------------------------------------------------------------------------
// Gradient projection

struct GradientProjectionOptions {
    int J = 5;
    double alpha0 = 1.0;               // alpha_j = alpha0 / sqrt(j) unless trainable
    bool trainable_steps = false;  // per-layer vector steps read from x[base_n_x + (j - 1) n_y ...]
    int base_n_x = 0;              // x length before the step tail (see augment_with_steps)
};

/// Projection onto {y in domain_y : h_j(y, xi) <= 0}; returns the point and the multipliers of h.
struct ProjectionResult {
    Vector z;
    Vector mu;
    Eigen::Array<bool, Eigen::Dynamic, 1> free;  // coordinates strictly inside the box
    std::vector<int> active;                      // constraints with positive multiplier
};

[[nodiscard]] ProjectionResult project_feasible(const ProblemDefinition& problem, const Vector& v, const State& xi);

/// One gradient-projection step Proj[y_prev - alpha .* grad_y g_s].
[[nodiscard]] Vector gp_layer(const ProblemDefinition& problem, const Vector& y_prev, const Vector& x,
                              const Vector& lambda, const State& xi, const Vector& alpha);

/// 1 / (power-iteration estimate of the largest eigenvalue of the y-Hessian of g_s).
[[nodiscard]] double estimate_gp_step(const ProblemDefinition& problem, const Vector& x, const Vector& lambda,
                                      const Vector& y, const State& xi, int iterations = 50);

class GradientProjection final : public ShortTermSolver {
public:
    GradientProjection(ProblemDefinition problem, GradientProjectionOptions options);

    [[nodiscard]] std::string kind() const override { return "gp"; }
    [[nodiscard]] int layers() const override { return options_.J; }
    [[nodiscard]] int n_x() const override { return problem_.n_x; }
    [[nodiscard]] int n_lambda() const override { return problem_.m; }
    [[nodiscard]] int n_y() const override { return problem_.n_y; }

    [[nodiscard]] Vector initial(const LayerContext& ctx) const override;
    [[nodiscard]] LayerOutput layer(int j, const LayerContext& ctx, const Vector& y_prev) const override;
    [[nodiscard]] LayerAdjoint layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                         const std::any& cache, const Vector& bar_y) const override;
    [[nodiscard]] std::optional<Vector> multipliers(const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                                    const std::any& cache) const override;

    [[nodiscard]] Vector step(int j, const Vector& x) const;

private:
    ProblemDefinition problem_;
    GradientProjectionOptions options_;
};

/// Problem whose x is extended by J * n_y trainable step sizes in [lo, hi]; sample functions ignore the tail.
[[nodiscard]] ProblemDefinition augment_with_steps(const ProblemDefinition& problem, int J, double lo, double hi);

// ---------------------------------------------------------------------------------------------
// Majorization-minimization with proximal-linearized surrogates

struct MajorizationOptions {
    int J = 5;
    double tau_s = 1.0;
    Vector tau_si;  // one per short-term constraint; empty means all 1
};

/// argmin grad_y g_s(y')^T (y - y') + tau_s |y - y'|^2 s.t. h_i(y') + grad h_i(y')^T (y - y') + tau_si |y - y'|^2 <= 0.
[[nodiscard]] Vector mm_layer(const ProblemDefinition& problem, const Vector& y_prev, const Vector& x,
                              const Vector& lambda, const State& xi, double tau_s, const Vector& tau_si);

class MajorizationMinimization final : public ShortTermSolver {
public:
    MajorizationMinimization(ProblemDefinition problem, MajorizationOptions options);

    [[nodiscard]] std::string kind() const override { return "mm"; }
    [[nodiscard]] int layers() const override { return options_.J; }
    [[nodiscard]] int n_x() const override { return problem_.n_x; }
    [[nodiscard]] int n_lambda() const override { return problem_.m; }
    [[nodiscard]] int n_y() const override { return problem_.n_y; }

    [[nodiscard]] Vector initial(const LayerContext& ctx) const override;
    [[nodiscard]] LayerOutput layer(int j, const LayerContext& ctx, const Vector& y_prev) const override;
    [[nodiscard]] LayerAdjoint layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                         const std::any& cache, const Vector& bar_y) const override;
    [[nodiscard]] std::optional<Vector> multipliers(const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                                    const std::any& cache) const override;

private:
    ProblemDefinition problem_;
    MajorizationOptions options_;
};

// ---------------------------------------------------------------------------------------------
// Closed form: a single analytic layer

struct ClosedFormMap {
    std::function<LayerOutput(const LayerContext&)> forward;
    std::function<LayerAdjoint(const LayerContext&, const Vector& y, const std::any& cache, const Vector& bar_y)>
        vjp;
};

class ClosedForm final : public ShortTermSolver {
public:
    ClosedForm(std::string name, int n_x, int n_lambda, int n_y, ClosedFormMap map);

    [[nodiscard]] std::string kind() const override { return name_; }
    [[nodiscard]] int layers() const override { return 1; }
    [[nodiscard]] int n_x() const override { return n_x_; }
    [[nodiscard]] int n_lambda() const override { return n_lambda_; }
    [[nodiscard]] int n_y() const override { return n_y_; }

    [[nodiscard]] Vector initial(const LayerContext& ctx) const override;
    [[nodiscard]] LayerOutput layer(int j, const LayerContext& ctx, const Vector& y_prev) const override;
    [[nodiscard]] LayerAdjoint layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                         const std::any& cache, const Vector& bar_y) const override;

private:
    std::string name_;
    int n_x_;
    int n_lambda_;
    int n_y_;
    ClosedFormMap map_;
};

/// p_i = (1 / (N a_i)) (a_i / (b_i upsilon + lambda_i) - 1)^+; a zero denominator yields `cap` and sets `flagged`.
[[nodiscard]] Vector cmac_short_term(const Vector& lambda, double upsilon, const Vector& a, const Vector& b,
                                     double cap = 1e6, bool* flagged = nullptr);

// ---------------------------------------------------------------------------------------------
// WMMSE for hybrid precoding: y = [vec Re G; vec Im G] (G is S x K), x = theta (M x S, column-major),
// xi = [vec Re H; vec Im H] (H is K x M with rows h_k^H).

struct WmmseDims {
    int M = 16;
    int S = 2;
    int K = 2;
};

[[nodiscard]] Vector stack_complex(const ComplexMatrix& A);
[[nodiscard]] ComplexMatrix unstack_complex(const Vector& v, Eigen::Index rows, Eigen::Index cols);
/// F_{m,s} = exp(j theta_{m,s}).
[[nodiscard]] ComplexMatrix rf_precoder(const Vector& theta, int M, int S);
/// theta_bar = Im(conj(F) .* F_bar), the adjoint of F = exp(j theta).
[[nodiscard]] Vector rf_precoder_adjoint(const ComplexMatrix& F, const ComplexMatrix& F_bar);

struct WmmseSweep {
    ComplexMatrix G;
    ComplexVector u;
    Vector w;
    bool flagged = false;
};

/// One u -> w -> G block sweep from G_prev.
[[nodiscard]] WmmseSweep wmmse_layer(const ComplexMatrix& G_prev, const ComplexMatrix& F, const Vector& lambda,
                                     const ComplexMatrix& H);

/// Tr(F G G^H F^H) + sum_k lambda_k (w_k e_k - log w_k) for explicit (G, u, w).
[[nodiscard]] double wmmse_objective(const ComplexMatrix& G, const ComplexVector& u, const Vector& w,
                                     const ComplexMatrix& F, const Vector& lambda, const ComplexMatrix& H);

/// The objective minimized over (u, w): Tr(F G G^H F^H) - sum_k lambda_k r_k + sum_k lambda_k.
[[nodiscard]] double wmmse_reduced_objective(const ComplexMatrix& G, const ComplexMatrix& F, const Vector& lambda,
                                             const ComplexMatrix& H);

/// Per-user rates log(1 + |h_k^H F g_k|^2 / (sum_{i != k} |h_k^H F g_i|^2 + 1)).
[[nodiscard]] Vector user_rates(const ComplexMatrix& G, const ComplexMatrix& F, const ComplexMatrix& H);

class Wmmse final : public ShortTermSolver {
public:
    Wmmse(WmmseDims dims, int J);

    [[nodiscard]] std::string kind() const override { return "wmmse"; }
    [[nodiscard]] int layers() const override { return J_; }
    [[nodiscard]] int n_x() const override { return dims_.M * dims_.S; }
    [[nodiscard]] int n_lambda() const override { return dims_.K; }
    [[nodiscard]] int n_y() const override { return 2 * dims_.S * dims_.K; }
    [[nodiscard]] const WmmseDims& dims() const { return dims_; }

    /// Matched-filter start: columns F^H h_k / |F^H h_k|.
    [[nodiscard]] Vector initial(const LayerContext& ctx) const override;
    [[nodiscard]] LayerAdjoint initial_vjp(const LayerContext& ctx, const Vector& bar_y0) const override;
    [[nodiscard]] LayerOutput layer(int j, const LayerContext& ctx, const Vector& y_prev) const override;
    [[nodiscard]] LayerAdjoint layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                         const std::any& cache, const Vector& bar_y) const override;

private:
    WmmseDims dims_;
    int J_;
};

}  // namespace pdd

#include "pdd/tape.hpp"

namespace pdd {

/// Runs the initializer and J layers, recording the tape, and fills the KKT errors of y^J.
[[nodiscard]] std::pair<ShortTermResult, UnrollTape> run_short_term(const ProblemDefinition& problem,
                                                                    const SolverPtr& solver, const Vector& x,
                                                                    const Vector& lambda, const State& xi);

}  // namespace pdd
