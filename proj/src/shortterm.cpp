#include "pdd/shortterm.hpp"

#include "pdd/convex.hpp"

#include <algorithm>
#include <cmath>

namespace pdd {

namespace {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

std::vector<Eigen::Index> free_indices(const BoolArray& free) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index k = 0; k < free.size(); ++k) {
        if (free[k]) out.push_back(k);
    }
    return out;
}

/// Solves [[D, C^T], [C, 0]] [a; b] = [rhs_F; 0] on the free coordinates and scatters a back to full length.
std::pair<Vector, Vector> solve_active_kkt(const Matrix& D_full, const Matrix& C_full, const BoolArray& free,
                                           const Vector& rhs) {
    const std::vector<Eigen::Index> F = free_indices(free);
    const auto nf = static_cast<Eigen::Index>(F.size());
    const Eigen::Index na = C_full.rows();
    Matrix K = Matrix::Zero(nf + na, nf + na);
    Vector r = Vector::Zero(nf + na);
    for (Eigen::Index f = 0; f < nf; ++f) {
        r[f] = rhs[F[static_cast<std::size_t>(f)]];
        for (Eigen::Index e = 0; e < nf; ++e) K(f, e) = D_full(F[static_cast<std::size_t>(f)], F[static_cast<std::size_t>(e)]);
        for (Eigen::Index a = 0; a < na; ++a) {
            K(f, nf + a) = C_full(a, F[static_cast<std::size_t>(f)]);
            K(nf + a, f) = C_full(a, F[static_cast<std::size_t>(f)]);
        }
    }
    Vector sol = Vector::Zero(nf + na);
    if (nf + na > 0) {
        Eigen::FullPivLU<Matrix> lu(K);
        if (!lu.isInvertible()) throw NumericalFailure("active-set KKT system is singular");
        sol = lu.solve(r);
    }
    Vector a = Vector::Zero(rhs.size());
    for (Eigen::Index f = 0; f < nf; ++f) a[F[static_cast<std::size_t>(f)]] = sol[f];
    return {a, sol.tail(na)};
}

SmoothFunction short_constraint_function(const ProblemDefinition& problem, int j, const State& xi) {
    return {[&problem, j, xi](const Vector& z, Vector* g, Matrix* h) {
        const ConstraintEval e = evaluate_short_constraint(problem, j, z, xi);
        if (g) *g = e.grad_y;
        if (h) *h = short_constraint_hessian(problem, j, z, xi);
        return e.value;
    }};
}

Vector short_hvp(const ProblemDefinition& problem, int j, const Vector& y, const State& xi, const Vector& w) {
    if (problem.short_curvature) return problem.short_curvature(j, y, xi, w);
    return short_constraint_hessian(problem, j, y, xi) * w;
}

bool strictly_feasible(const ConvexProgram& program, const Vector& z) {
    if (!program.box.contains(z) || ((z - program.box.lower()).array() <= 0.0).any() ||
        ((program.box.upper() - z).array() <= 0.0).any()) {
        return false;
    }
    return std::all_of(program.constraints.begin(), program.constraints.end(),
                       [&](const SmoothFunction& c) { return c(z) < 0.0; });
}

struct GpCache {
    Vector alpha;
    Vector grad;
    ProjectionResult projection;
};

struct MmCache {
    Vector grad;
    Vector mu;
    BoolArray free;
    std::vector<int> active;
    bool fallback = false;
};

}  // namespace

// ---------------------------------------------------------------------------------------------

LayerAdjoint ShortTermSolver::initial_vjp(const LayerContext& ctx, const Vector& bar_y0) const {
    (void)bar_y0;
    return {Vector::Zero(n_y()), Vector::Zero(ctx.x.size()), Vector::Zero(ctx.lambda.size())};
}

std::optional<Vector> ShortTermSolver::multipliers(const LayerContext&, const Vector&, const Vector&,
                                                   const std::any&) const {
    return std::nullopt;
}

// ---------------------------------------------------------------------------------------------

ProjectionResult project_feasible(const ProblemDefinition& problem, const Vector& v, const State& xi) {
    const Box& box = problem.domain_y;
    if (v.size() != box.size()) throw InvalidInput("project_feasible: dimension mismatch");
    ProjectionResult out;
    if (problem.n == 0) {
        out.z = box.project(v);
        out.mu = Vector(0);
        out.free = (v.array() > box.lower().array()) && (v.array() < box.upper().array());
        return out;
    }
    ConvexProgram program;
    program.box = box;
    program.objective.eval = [&v](const Vector& z, Vector* g, Matrix* h) {
        if (g) *g = z - v;
        if (h) *h = Matrix::Identity(z.size(), z.size());
        return 0.5 * (z - v).squaredNorm();
    };
    for (int j = 0; j < problem.n; ++j) program.constraints.push_back(short_constraint_function(problem, j, xi));

    Vector start = box.interior(box.project(v));
    if (!strictly_feasible(program, start)) {
        const PhaseOneOutcome ph = phase_one(program, box.center());
        if (!ph.feasible) throw NumericalFailure("projection onto an empty short-term feasible set");
        start = ph.solution.z;
    }
    const BarrierSolution sol = minimize_barrier(program, start);
    const ActiveSetSolution polished = polish_active_set(program, sol);
    out.z = polished.z;
    out.mu = polished.multipliers;
    out.free = polished.free;
    out.active = polished.active;
    return out;
}

Vector gp_layer(const ProblemDefinition& problem, const Vector& y_prev, const Vector& x, const Vector& lambda,
                const State& xi, const Vector& alpha) {
    if (alpha.size() != 1 && alpha.size() != y_prev.size()) throw InvalidInput("gp_layer: step size dimension");
    if ((alpha.array() <= 0.0).any()) throw InvalidInput("gp_layer: step sizes must be positive");
    const Vector grad = lagrangian_grad_y(problem, x, lambda, y_prev, xi);
    const Vector a = alpha.size() == 1 ? Vector::Constant(y_prev.size(), alpha[0]) : alpha;
    return project_feasible(problem, y_prev - a.cwiseProduct(grad), xi).z;
}

double estimate_gp_step(const ProblemDefinition& problem, const Vector& x, const Vector& lambda, const Vector& y,
                        const State& xi, int iterations) {
    if (problem.n_y == 0) return 1.0;
    Vector v = Vector::Ones(problem.n_y).normalized();
    double L = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const Vector hv = lagrangian_curvature(problem, x, lambda, y, xi, v).yy;
        L = std::abs(v.dot(hv));
        const double nrm = hv.norm();
        if (nrm == 0.0) break;
        v = hv / nrm;
    }
    return L > 0.0 ? 1.0 / L : 1.0;
}

GradientProjection::GradientProjection(ProblemDefinition problem, GradientProjectionOptions options)
    : problem_(std::move(problem)), options_(options) {
    problem_.validate();
    if (options_.J < 0) throw InvalidInput("GradientProjection: J must be nonnegative");
    if (!options_.trainable_steps && !(options_.alpha0 > 0.0)) throw InvalidInput("GradientProjection: alpha0");
    if (options_.trainable_steps && options_.base_n_x + options_.J * problem_.n_y != problem_.n_x) {
        throw InvalidInput("GradientProjection: trainable steps need an x tail of J * n_y entries");
    }
}

Vector GradientProjection::step(int j, const Vector& x) const {
    if (options_.trainable_steps) {
        return x.segment(options_.base_n_x + (j - 1) * problem_.n_y, problem_.n_y);
    }
    return Vector::Constant(problem_.n_y, options_.alpha0 / std::sqrt(static_cast<double>(j)));
}

Vector GradientProjection::initial(const LayerContext&) const { return problem_.domain_y.center(); }

LayerOutput GradientProjection::layer(int j, const LayerContext& ctx, const Vector& y_prev) const {
    GpCache cache;
    cache.alpha = step(j, ctx.x);
    if ((cache.alpha.array() <= 0.0).any()) throw InvalidInput("GradientProjection: nonpositive step size");
    cache.grad = lagrangian_grad_y(problem_, ctx.x, ctx.lambda, y_prev, ctx.xi);
    cache.projection = project_feasible(problem_, y_prev - cache.alpha.cwiseProduct(cache.grad), ctx.xi);
    LayerOutput out;
    out.y = cache.projection.z;
    out.cache = std::move(cache);
    return out;
}

LayerAdjoint GradientProjection::layer_vjp(int j, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                           const std::any& cache_any, const Vector& bar_y) const {
    const auto& cache = std::any_cast<const GpCache&>(cache_any);
    const ProjectionResult& proj = cache.projection;
    const auto na = static_cast<Eigen::Index>(proj.active.size());

    Vector bar_v;
    if (na == 0) {
        bar_v = proj.free.select(bar_y, Vector::Zero(bar_y.size()));
    } else {
        Matrix D = Matrix::Identity(y.size(), y.size());
        Matrix C(na, y.size());
        for (Eigen::Index a = 0; a < na; ++a) {
            const int i = proj.active[static_cast<std::size_t>(a)];
            D += proj.mu[i] * short_constraint_hessian(problem_, i, y, ctx.xi);
            C.row(a) = evaluate_short_constraint(problem_, i, y, ctx.xi).grad_y.transpose();
        }
        bar_v = solve_active_kkt(D, C, proj.free, bar_y).first;
    }

    const Vector w = cache.alpha.cwiseProduct(bar_v);
    const CurvatureProduct curv = lagrangian_curvature(problem_, ctx.x, ctx.lambda, y_prev, ctx.xi, w);
    LayerAdjoint adj;
    adj.y_prev = bar_v - curv.yy;
    adj.x = -curv.xy;
    if (options_.trainable_steps) {
        adj.x.segment(options_.base_n_x + (j - 1) * problem_.n_y, problem_.n_y) -= bar_v.cwiseProduct(cache.grad);
    }
    adj.lambda.resize(problem_.m);
    for (int k = 1; k <= problem_.m; ++k) {
        adj.lambda[k - 1] = -evaluate_sample(problem_, k, ctx.x, y_prev, ctx.xi).grad_y.dot(w);
    }
    return adj;
}

std::optional<Vector> GradientProjection::multipliers(const LayerContext&, const Vector&, const Vector&,
                                                      const std::any& cache_any) const {
    if (problem_.n == 0) return std::nullopt;
    const auto& cache = std::any_cast<const GpCache&>(cache_any);
    return Vector(cache.projection.mu / cache.alpha.mean());
}

ProblemDefinition augment_with_steps(const ProblemDefinition& problem, int J, double lo, double hi) {
    ProblemDefinition out = problem;
    const int base = problem.n_x;
    const int extra = J * problem.n_y;
    out.n_x = base + extra;
    out.domain_x = concat(problem.domain_x, Box::uniform(extra, lo, hi));
    auto pad = [extra](const Vector& v) {
        Vector r(v.size() + extra);
        r << v, Vector::Zero(extra);
        return r;
    };
    out.sample_fn = [f = problem.sample_fn, base, pad](int i, const Vector& x, const Vector& y, const State& xi) {
        SampleEval e = f(i, x.head(base), y, xi);
        e.grad_x = pad(e.grad_x);
        return e;
    };
    if (problem.sample_curvature) {
        out.sample_curvature = [f = problem.sample_curvature, base, pad](int i, const Vector& x, const Vector& y,
                                                                        const State& xi, const Vector& w) {
            CurvatureProduct c = f(i, x.head(base), y, xi, w);
            c.xy = pad(c.xy);
            return c;
        };
    }
    if (problem.convex_part) {
        out.convex_part = [f = problem.convex_part, base, extra, pad](int i, const Vector& x, const Vector& y,
                                                                     const State& xi) {
            ConvexPartEval e = f(i, x.head(base), y, xi);
            e.grad_x = pad(e.grad_x);
            Matrix h = Matrix::Zero(base + extra, base + extra);
            h.topLeftCorner(base, base) = e.hess_xx;
            e.hess_xx = h;
            return e;
        };
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct MmSolve {
    Vector y;
    MmCache cache;
};

MmSolve solve_mm(const ProblemDefinition& problem, const Vector& y_prev, const Vector& x, const Vector& lambda,
                 const State& xi, double tau_s, const Vector& tau_si) {
    MmSolve out;
    out.cache.grad = lagrangian_grad_y(problem, x, lambda, y_prev, xi);
    const Box& box = problem.domain_y;
    if (problem.n == 0) {
        const Vector v = y_prev - out.cache.grad / (2.0 * tau_s);
        out.y = box.project(v);
        out.cache.free = (v.array() > box.lower().array()) && (v.array() < box.upper().array());
        out.cache.mu = Vector(0);
        return out;
    }
    const Vector g = out.cache.grad;
    ConvexProgram program;
    program.box = box;
    program.objective.eval = [g, y_prev, tau_s](const Vector& z, Vector* grad, Matrix* h) {
        const Vector d = z - y_prev;
        if (grad) *grad = g + 2.0 * tau_s * d;
        if (h) *h = 2.0 * tau_s * Matrix::Identity(z.size(), z.size());
        return g.dot(d) + tau_s * d.squaredNorm();
    };
    for (int i = 0; i < problem.n; ++i) {
        const ConstraintEval h0 = evaluate_short_constraint(problem, i, y_prev, xi);
        const double ti = tau_si[i];
        program.constraints.push_back({[h0, y_prev, ti](const Vector& z, Vector* grad, Matrix* h) {
            const Vector d = z - y_prev;
            if (grad) *grad = h0.grad_y + 2.0 * ti * d;
            if (h) *h = 2.0 * ti * Matrix::Identity(z.size(), z.size());
            return h0.value + h0.grad_y.dot(d) + ti * d.squaredNorm();
        }});
    }
    Vector start = box.interior(y_prev);
    if (!strictly_feasible(program, start)) {
        const PhaseOneOutcome ph = phase_one(program, start);
        if (!ph.feasible) {
            out.y = ph.solution.z;
            out.cache.fallback = true;
            out.cache.mu = Vector::Zero(problem.n);
            out.cache.free = BoolArray::Constant(out.y.size(), true);
            return out;
        }
        start = ph.solution.z;
    }
    const BarrierSolution sol = minimize_barrier(program, start);
    const ActiveSetSolution polished = polish_active_set(program, sol);
    out.y = polished.z;
    out.cache.mu = polished.multipliers;
    out.cache.free = polished.free;
    out.cache.active = polished.active;
    return out;
}

Vector tau_vector(const MajorizationOptions& o, int n) {
    if (o.tau_si.size() == 0) return Vector::Ones(n);
    if (o.tau_si.size() != n) throw InvalidInput("MajorizationMinimization: tau_si length must equal n");
    return o.tau_si;
}

}  // namespace

Vector mm_layer(const ProblemDefinition& problem, const Vector& y_prev, const Vector& x, const Vector& lambda,
                const State& xi, double tau_s, const Vector& tau_si) {
    if (!(tau_s > 0.0)) throw InvalidInput("mm_layer: tau_s must be positive");
    const Vector ts = tau_si.size() == 0 ? Vector::Ones(problem.n) : tau_si;
    if (ts.size() != problem.n) throw InvalidInput("mm_layer: tau_si length must equal n");
    return solve_mm(problem, y_prev, x, lambda, xi, tau_s, ts).y;
}

MajorizationMinimization::MajorizationMinimization(ProblemDefinition problem, MajorizationOptions options)
    : problem_(std::move(problem)), options_(std::move(options)) {
    problem_.validate();
    if (options_.J < 0) throw InvalidInput("MajorizationMinimization: J must be nonnegative");
    if (!(options_.tau_s > 0.0)) throw InvalidInput("MajorizationMinimization: tau_s must be positive");
    options_.tau_si = tau_vector(options_, problem_.n);
    if ((options_.tau_si.array() < 0.0).any()) throw InvalidInput("MajorizationMinimization: tau_si must be >= 0");
}

Vector MajorizationMinimization::initial(const LayerContext&) const { return problem_.domain_y.center(); }

LayerOutput MajorizationMinimization::layer(int, const LayerContext& ctx, const Vector& y_prev) const {
    MmSolve s = solve_mm(problem_, y_prev, ctx.x, ctx.lambda, ctx.xi, options_.tau_s, options_.tau_si);
    LayerOutput out;
    out.y = s.y;
    out.flagged = s.cache.fallback;
    out.cache = std::move(s.cache);
    return out;
}

LayerAdjoint MajorizationMinimization::layer_vjp(int, const LayerContext& ctx, const Vector& y_prev, const Vector& y,
                                                 const std::any& cache_any, const Vector& bar_y) const {
    const auto& cache = std::any_cast<const MmCache&>(cache_any);
    LayerAdjoint adj{Vector::Zero(y.size()), Vector::Zero(ctx.x.size()), Vector::Zero(problem_.m)};
    if (cache.fallback) return adj;

    const double tau_s = options_.tau_s;
    const auto na = static_cast<Eigen::Index>(cache.active.size());
    const Vector d = y - y_prev;
    double c = 2.0 * tau_s;
    Matrix C(na, y.size());
    for (Eigen::Index a = 0; a < na; ++a) {
        const int i = cache.active[static_cast<std::size_t>(a)];
        const double ti = options_.tau_si[i];
        c += 2.0 * cache.mu[i] * ti;
        C.row(a) = (evaluate_short_constraint(problem_, i, y_prev, ctx.xi).grad_y + 2.0 * ti * d).transpose();
    }
    const Matrix D = c * Matrix::Identity(y.size(), y.size());
    const auto [a_full, b] = solve_active_kkt(D, C, cache.free, bar_y);

    const CurvatureProduct curv = lagrangian_curvature(problem_, ctx.x, ctx.lambda, y_prev, ctx.xi, a_full);
    Vector r = curv.yy - 2.0 * tau_s * a_full;
    for (Eigen::Index a = 0; a < na; ++a) {
        const int i = cache.active[static_cast<std::size_t>(a)];
        const double ti = options_.tau_si[i];
        r += cache.mu[i] * (short_hvp(problem_, i, y_prev, ctx.xi, a_full) - 2.0 * ti * a_full);
        r += b[a] * (short_hvp(problem_, i, y_prev, ctx.xi, d) - 2.0 * ti * d);
    }
    adj.y_prev = -r;
    adj.x = -curv.xy;
    for (int k = 1; k <= problem_.m; ++k) {
        adj.lambda[k - 1] = -evaluate_sample(problem_, k, ctx.x, y_prev, ctx.xi).grad_y.dot(a_full);
    }
    return adj;
}

std::optional<Vector> MajorizationMinimization::multipliers(const LayerContext&, const Vector&, const Vector&,
                                                            const std::any& cache_any) const {
    if (problem_.n == 0) return std::nullopt;
    return std::any_cast<const MmCache&>(cache_any).mu;
}

// ---------------------------------------------------------------------------------------------

ClosedForm::ClosedForm(std::string name, int n_x, int n_lambda, int n_y, ClosedFormMap map)
    : name_(std::move(name)), n_x_(n_x), n_lambda_(n_lambda), n_y_(n_y), map_(std::move(map)) {
    if (!map_.forward || !map_.vjp) throw InvalidInput("ClosedForm: forward and vjp are required");
}

Vector ClosedForm::initial(const LayerContext&) const { return Vector::Zero(n_y_); }

LayerOutput ClosedForm::layer(int, const LayerContext& ctx, const Vector&) const { return map_.forward(ctx); }

LayerAdjoint ClosedForm::layer_vjp(int, const LayerContext& ctx, const Vector&, const Vector& y,
                                   const std::any& cache, const Vector& bar_y) const {
    LayerAdjoint adj = map_.vjp(ctx, y, cache, bar_y);
    adj.y_prev = Vector::Zero(n_y_);
    return adj;
}

Vector cmac_short_term(const Vector& lambda, double upsilon, const Vector& a, const Vector& b, double cap,
                       bool* flagged) {
    const Eigen::Index N = a.size();
    if (lambda.size() != N || b.size() != N) throw InvalidInput("cmac_short_term: dimension mismatch");
    if ((a.array() <= 0.0).any()) throw InvalidInput("cmac_short_term: gains a must be positive");
    if ((b.array() < 0.0).any() || (lambda.array() < 0.0).any() || upsilon < 0.0) {
        throw InvalidInput("cmac_short_term: b, lambda and upsilon must be nonnegative");
    }
    Vector p(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double c = b[i] * upsilon + lambda[i];
        if (c == 0.0) {
            p[i] = cap;
            if (flagged) *flagged = true;
            continue;
        }
        p[i] = std::min(cap, std::max(0.0, a[i] / c - 1.0) / (static_cast<double>(N) * a[i]));
    }
    return p;
}

// ---------------------------------------------------------------------------------------------

Vector stack_complex(const ComplexMatrix& A) {
    const Eigen::Index n = A.size();
    Vector out(2 * n);
    const Eigen::Map<const Eigen::VectorXcd> flat(A.data(), n);
    out.head(n) = flat.real();
    out.tail(n) = flat.imag();
    return out;
}

ComplexMatrix unstack_complex(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    const Eigen::Index n = rows * cols;
    if (v.size() != 2 * n) throw InvalidInput("unstack_complex: length mismatch");
    ComplexMatrix A(rows, cols);
    Eigen::Map<Eigen::VectorXcd> flat(A.data(), n);
    flat.real() = v.head(n);
    flat.imag() = v.tail(n);
    return A;
}

ComplexMatrix rf_precoder(const Vector& theta, int M, int S) {
    if (theta.size() != static_cast<Eigen::Index>(M) * S) throw InvalidInput("rf_precoder: theta length");
    ComplexMatrix F(M, S);
    for (int s = 0; s < S; ++s) {
        for (int m = 0; m < M; ++m) F(m, s) = std::polar(1.0, theta[m + M * s]);
    }
    return F;
}

Vector rf_precoder_adjoint(const ComplexMatrix& F, const ComplexMatrix& F_bar) {
    const ComplexMatrix prod = F.conjugate().cwiseProduct(F_bar);
    return Eigen::Map<const Eigen::VectorXcd>(prod.data(), prod.size()).imag();
}

namespace {

struct WmmseCache {
    ComplexMatrix F;
    ComplexMatrix E;  // H F
    ComplexMatrix T;  // E G_prev
    Vector tot;
    Vector interference;
    ComplexVector u;
    Vector w;
    Vector c;
    ComplexVector d;
    Eigen::LDLT<ComplexMatrix> Q;
    ComplexMatrix G;
    bool flagged = false;
};

WmmseCache wmmse_forward(const ComplexMatrix& G_prev, const ComplexMatrix& F, const Vector& lambda,
                         const ComplexMatrix& H) {
    const Eigen::Index K = H.rows();
    const Eigen::Index S = F.cols();
    if (G_prev.rows() != S || G_prev.cols() != K || lambda.size() != K || H.cols() != F.rows()) {
        throw InvalidInput("wmmse_layer: dimension mismatch");
    }
    if ((lambda.array() < 0.0).any()) throw InvalidInput("wmmse_layer: lambda must be nonnegative");
    WmmseCache c;
    c.F = F;
    c.E = H * F;
    c.T = c.E * G_prev;
    c.tot = c.T.cwiseAbs2().rowwise().sum().array() + 1.0;
    const ComplexVector diag = c.T.diagonal();
    c.u = diag.cwiseQuotient(c.tot.cast<std::complex<double>>());
    c.interference = c.tot - diag.cwiseAbs2();
    c.w = c.tot.cwiseQuotient(c.interference);
    c.c = lambda.cwiseProduct(c.w).cwiseProduct(c.u.cwiseAbs2());
    c.d = lambda.cwiseProduct(c.w).cast<std::complex<double>>().cwiseProduct(c.u);
    ComplexMatrix Q = F.adjoint() * F + c.E.adjoint() * c.c.cast<std::complex<double>>().asDiagonal() * c.E;
    const ComplexMatrix R = c.E.adjoint() * c.d.asDiagonal();
    c.Q.compute(Q);
    const double floor = 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff());
    if (c.Q.info() != Eigen::Success || c.Q.vectorD().real().minCoeff() <= floor) {
        Q += ComplexMatrix::Identity(S, S) * 1e-12;
        c.Q.compute(Q);
        c.flagged = true;
    }
    c.G = c.Q.solve(R);
    if (!c.G.allFinite()) throw NumericalFailure("wmmse_layer: precoder solve produced non-finite values");
    return c;
}

}  // namespace

WmmseSweep wmmse_layer(const ComplexMatrix& G_prev, const ComplexMatrix& F, const Vector& lambda,
                       const ComplexMatrix& H) {
    const WmmseCache c = wmmse_forward(G_prev, F, lambda, H);
    return {c.G, c.u, c.w, c.flagged};
}

double wmmse_objective(const ComplexMatrix& G, const ComplexVector& u, const Vector& w, const ComplexMatrix& F,
                       const Vector& lambda, const ComplexMatrix& H) {
    const ComplexMatrix T = H * F * G;
    double value = (F * G).squaredNorm();
    for (Eigen::Index k = 0; k < T.rows(); ++k) {
        double e = std::norm(1.0 - std::conj(u[k]) * T(k, k)) + std::norm(u[k]);
        for (Eigen::Index i = 0; i < T.cols(); ++i) {
            if (i != k) e += std::norm(u[k]) * std::norm(T(k, i));
        }
        value += lambda[k] * (w[k] * e - std::log(w[k]));
    }
    return value;
}

Vector user_rates(const ComplexMatrix& G, const ComplexMatrix& F, const ComplexMatrix& H) {
    const ComplexMatrix T = H * F * G;
    const Vector tot = T.cwiseAbs2().rowwise().sum().array() + 1.0;
    const Vector interference = tot - T.diagonal().cwiseAbs2();
    return (tot.array().log() - interference.array().log()).matrix();
}

double wmmse_reduced_objective(const ComplexMatrix& G, const ComplexMatrix& F, const Vector& lambda,
                               const ComplexMatrix& H) {
    return (F * G).squaredNorm() - lambda.dot(user_rates(G, F, H)) + lambda.sum();
}

Wmmse::Wmmse(WmmseDims dims, int J) : dims_(dims), J_(J) {
    if (dims_.M < 1 || dims_.S < 1 || dims_.K < 1) throw InvalidInput("Wmmse: dimensions must be positive");
    if (J_ < 0) throw InvalidInput("Wmmse: J must be nonnegative");
}

Vector Wmmse::initial(const LayerContext& ctx) const {
    const ComplexMatrix F = rf_precoder(ctx.x, dims_.M, dims_.S);
    const ComplexMatrix H = unstack_complex(ctx.xi, dims_.K, dims_.M);
    ComplexMatrix V = (H * F).adjoint();
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        const double n = V.col(k).norm();
        if (n == 0.0) throw NumericalFailure("Wmmse: effective channel is zero");
        V.col(k) /= n;
    }
    return stack_complex(V);
}

LayerAdjoint Wmmse::initial_vjp(const LayerContext& ctx, const Vector& bar_y0) const {
    const ComplexMatrix F = rf_precoder(ctx.x, dims_.M, dims_.S);
    const ComplexMatrix H = unstack_complex(ctx.xi, dims_.K, dims_.M);
    const ComplexMatrix V = (H * F).adjoint();
    const ComplexMatrix Gbar = unstack_complex(bar_y0, dims_.S, dims_.K);
    ComplexMatrix Vbar(V.rows(), V.cols());
    for (Eigen::Index k = 0; k < V.cols(); ++k) {
        const double n = V.col(k).norm();
        const ComplexVector g = V.col(k) / n;
        const double proj = g.dot(Gbar.col(k)).real();
        Vbar.col(k) = (Gbar.col(k) - g * proj) / n;
    }
    const ComplexMatrix Ebar = Vbar.adjoint();
    const ComplexMatrix Fbar = H.adjoint() * Ebar;
    return {Vector::Zero(n_y()), rf_precoder_adjoint(F, Fbar), Vector::Zero(dims_.K)};
}

LayerOutput Wmmse::layer(int, const LayerContext& ctx, const Vector& y_prev) const {
    const ComplexMatrix F = rf_precoder(ctx.x, dims_.M, dims_.S);
    const ComplexMatrix H = unstack_complex(ctx.xi, dims_.K, dims_.M);
    const ComplexMatrix G_prev = unstack_complex(y_prev, dims_.S, dims_.K);
    WmmseCache c = wmmse_forward(G_prev, F, ctx.lambda, H);
    LayerOutput out;
    out.y = stack_complex(c.G);
    out.flagged = c.flagged;
    out.cache = std::move(c);
    return out;
}

LayerAdjoint Wmmse::layer_vjp(int, const LayerContext& ctx, const Vector& y_prev, const Vector&,
                              const std::any& cache_any, const Vector& bar_y) const {
    using cd = std::complex<double>;
    const auto& c = std::any_cast<const WmmseCache&>(cache_any);
    const ComplexMatrix H = unstack_complex(ctx.xi, dims_.K, dims_.M);
    const ComplexMatrix G_prev = unstack_complex(y_prev, dims_.S, dims_.K);
    const ComplexMatrix Gbar = unstack_complex(bar_y, dims_.S, dims_.K);
    const Vector& lambda = ctx.lambda;
    const Eigen::Index K = dims_.K;

    // G = Q^{-1} R
    const ComplexMatrix Rbar = c.Q.solve(Gbar);
    const ComplexMatrix Qbar = -Rbar * c.G.adjoint();
    const ComplexMatrix Qsym = Qbar + Qbar.adjoint();

    // R = E^H diag(d)
    ComplexMatrix Ebar = c.d.asDiagonal() * Rbar.adjoint();
    const ComplexMatrix ER = c.E * Rbar;
    const ComplexVector dbar = ER.diagonal();

    // Q = F^H F + E^H diag(c) E
    ComplexMatrix Fbar = c.F * Qsym;
    Ebar += c.c.cast<cd>().asDiagonal() * c.E * Qsym;
    const ComplexMatrix EQE = c.E * Qbar * c.E.adjoint();
    const Vector cbar = EQE.diagonal().real();

    const Vector u2 = c.u.cwiseAbs2();
    Vector lambda_bar(K);
    Vector wbar(K);
    ComplexVector ubar(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const cd wu = c.w[k] * c.u[k];
        lambda_bar[k] = (std::conj(dbar[k]) * wu).real() + cbar[k] * c.w[k] * u2[k];
        wbar[k] = (std::conj(dbar[k]) * lambda[k] * c.u[k]).real() + cbar[k] * lambda[k] * u2[k];
        ubar[k] = lambda[k] * c.w[k] * dbar[k] + 2.0 * c.u[k] * cbar[k] * lambda[k] * c.w[k];
    }

    // w = tot / interference, interference = tot - |T_kk|^2, u = T_kk / tot
    ComplexMatrix Tbar = ComplexMatrix::Zero(K, K);
    Vector totbar(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double intbar = -wbar[k] * c.tot[k] / (c.interference[k] * c.interference[k]);
        totbar[k] = wbar[k] / c.interference[k] + intbar;
        Tbar(k, k) += -2.0 * c.T(k, k) * intbar;
        Tbar(k, k) += ubar[k] / c.tot[k];
        totbar[k] -= (std::conj(ubar[k]) * c.T(k, k)).real() / (c.tot[k] * c.tot[k]);
    }
    // tot_k = sum_i |T_ki|^2 + 1
    Tbar += 2.0 * totbar.cast<cd>().asDiagonal() * c.T;

    // T = E G_prev, E = H F
    Ebar += Tbar * G_prev.adjoint();
    const ComplexMatrix Gprev_bar = c.E.adjoint() * Tbar;
    Fbar += H.adjoint() * Ebar;

    return {stack_complex(Gprev_bar), rf_precoder_adjoint(c.F, Fbar), lambda_bar};
}

// ---------------------------------------------------------------------------------------------

std::pair<ShortTermResult, UnrollTape> run_short_term(const ProblemDefinition& problem, const SolverPtr& solver,
                                                      const Vector& x, const Vector& lambda, const State& xi) {
    if (!solver) throw InvalidInput("run_short_term: solver missing");
    if (x.size() != solver->n_x() || lambda.size() != solver->n_lambda()) {
        throw InvalidInput("run_short_term: (x, lambda) dimensions do not match the solver");
    }
    if (solver->n_y() != problem.n_y) throw InvalidInput("run_short_term: solver and problem disagree on n_y");
    UnrollTape tape;
    tape.solver = solver;
    tape.context = LayerContext{x, lambda, xi};
    tape.layer_states.push_back(solver->initial(tape.context));
    tape.layer_kind.emplace_back("init");
    ShortTermResult result;
    const int J = solver->layers();
    for (int j = 1; j <= J; ++j) {
        LayerOutput out = solver->layer(j, tape.context, tape.layer_states.back());
        result.flagged = result.flagged || out.flagged;
        tape.layer_states.push_back(std::move(out.y));
        tape.caches.push_back(std::move(out.cache));
        tape.layer_kind.push_back(solver->kind());
    }
    result.y = tape.layer_states.back();
    if (J > 0) {
        result.nu = solver->multipliers(tape.context, tape.layer_states[static_cast<std::size_t>(J - 1)], result.y,
                                        tape.caches.back());
    }
    if (problem.n > 0 && !result.nu) result.nu = Vector::Zero(problem.n);
    result.kkt_errors = short_term_kkt(problem, x, lambda, result.y, result.nu, xi);
    return {std::move(result), std::move(tape)};
}

}  // namespace pdd
