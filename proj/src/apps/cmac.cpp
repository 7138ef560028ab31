#include "pdd/apps/cmac.hpp"

#include <cmath>
#include <limits>

namespace pdd::cmac {

GainLaw parse_gain_law(const std::string& name) {
    if (name == "exponential") return GainLaw::exponential;
    if (name == "gamma") return GainLaw::gamma;
    throw InvalidInput("cmac: unknown gain law '" + name + "' (expected exponential or gamma)");
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

void Instance::validate() const {
    if (N < 1) throw InvalidInput("cmac: N must be >= 1");
    if (!std::isfinite(P_db)) throw InvalidInput("cmac: P_db must be finite");
    if (!(Gamma >= 0.0) || !std::isfinite(Gamma)) throw InvalidInput("cmac: Gamma must be nonnegative");
    if (!(gain_mean > 0.0)) throw InvalidInput("cmac: gain_mean must be positive");
    if (!(gain_shape > 0.0)) throw InvalidInput("cmac: gain_shape must be positive");
    if (!(power_cap > P())) throw InvalidInput("cmac: power_cap must exceed P");
}

double Instance::P() const { return db_to_linear(P_db); }

State sample(const Instance& inst, Rng& rng) {
    State xi(2 * inst.N);
    if (inst.law == GainLaw::exponential) {
        std::exponential_distribution<double> d(1.0 / inst.gain_mean);
        for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = d(rng);
    } else {
        std::gamma_distribution<double> d(inst.gain_shape, inst.gain_mean / inst.gain_shape);
        for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = d(rng);
    }
    return xi;
}

double capacity(const State& xi, const Vector& p) {
    const auto N = p.size();
    return std::log1p(xi.head(N).dot(p));
}

ProblemDefinition problem(const Instance& inst) {
    inst.validate();
    if (!(inst.Gamma > 0.0)) throw InvalidInput("cmac: Gamma must be positive");
    const int N = inst.N;
    const double P = inst.P();
    const double Gamma = inst.Gamma;
    ProblemDefinition pd;
    pd.n_x = 0;
    pd.n_y = N;
    pd.m = N + 1;
    pd.domain_x = Box(Vector(0), Vector(0));
    pd.domain_y = Box::uniform(N, 0.0, inst.power_cap);
    pd.sample_fn = [N, P, Gamma](int i, const Vector&, const Vector& p, const State& xi) {
        SampleEval e;
        e.grad_x = Vector(0);
        const auto a = xi.head(N);
        const auto b = xi.tail(N);
        if (i == 0) {
            const double s = 1.0 + a.dot(p);
            e.value = -std::log(s);
            e.grad_y = -a / s;
        } else if (i <= N) {
            e.value = p[i - 1] - P;
            e.grad_y = Vector::Unit(N, i - 1);
        } else {
            e.value = b.dot(p) - Gamma;
            e.grad_y = b;
        }
        return e;
    };
    pd.sample_curvature = [N](int i, const Vector&, const Vector& p, const State& xi, const Vector& w) {
        CurvatureProduct c{Vector::Zero(N), Vector(0)};
        if (i == 0) {
            const auto a = xi.head(N);
            const double s = 1.0 + a.dot(p);
            c.yy = a * (a.dot(w) / (s * s));
        }
        return c;
    };
    pd.sampler = [inst](Rng& rng) { return sample(inst, rng); };
    return pd;
}

SolverPtr solver(const Instance& inst) {
    inst.validate();
    const int N = inst.N;
    const double cap = inst.power_cap;
    ClosedFormMap map;
    map.forward = [N, cap](const LayerContext& ctx) {
        LayerOutput out;
        bool flagged = false;
        out.y = cmac_short_term(ctx.lambda.head(N), ctx.lambda[N], ctx.xi.head(N), ctx.xi.tail(N), cap, &flagged);
        out.flagged = flagged;
        return out;
    };
    map.vjp = [N, cap](const LayerContext& ctx, const Vector& p, const std::any&, const Vector& bar_p) {
        LayerAdjoint adj{Vector::Zero(N), Vector(0), Vector::Zero(N + 1)};
        const auto b = ctx.xi.tail(N);
        const double ups = ctx.lambda[N];
        for (int i = 0; i < N; ++i) {
            if (!(p[i] > 0.0) || p[i] >= cap) continue;
            const double c = b[i] * ups + ctx.lambda[i];
            const double dp_dc = -1.0 / (N * c * c);
            adj.lambda[i] += bar_p[i] * dp_dc;
            adj.lambda[N] += bar_p[i] * dp_dc * b[i];
        }
        return adj;
    };
    return std::make_shared<ClosedForm>("cmac", 0, N + 1, N, map);
}

double PolicyValue::max_violation() const { return residuals.size() == 0 ? 0.0 : residuals.maxCoeff(); }

PolicyValue evaluate_policy(const Instance& inst, const Vector& multipliers, const std::vector<State>& samples) {
    const int N = inst.N;
    if (multipliers.size() != N + 1) throw InvalidInput("cmac: multipliers need N + 1 entries");
    if (samples.empty()) throw InvalidInput("cmac: empty sample set");
    PolicyValue v;
    v.residuals = Vector::Zero(N + 1);
    for (const State& xi : samples) {
        const Vector p = cmac_short_term(multipliers.head(N), multipliers[N], xi.head(N), xi.tail(N), inst.power_cap);
        v.capacity += capacity(xi, p);
        v.residuals.head(N) += p;
        v.residuals[N] += xi.tail(N).dot(p);
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    v.capacity *= inv;
    v.residuals *= inv;
    v.residuals.head(N).array() -= inst.P();
    v.residuals[N] -= inst.Gamma;
    return v;
}

namespace {

/// Sample-average dual function of the separable subproblem (minimization form, to be maximized).
double dual_value(const Instance& inst, const Vector& mu, const std::vector<State>& samples, Vector* supergradient) {
    const int N = inst.N;
    double value = 0.0;
    for (const State& xi : samples) {
        const auto a = xi.head(N);
        const auto b = xi.tail(N);
        const Vector p = cmac_short_term(mu.head(N), mu[N], a, b, inst.power_cap);
        for (int i = 0; i < N; ++i) value -= std::log1p(N * a[i] * p[i]) / N;
        value += mu.head(N).dot(p) + mu[N] * b.dot(p);
    }
    value /= static_cast<double>(samples.size());
    value -= mu.head(N).sum() * inst.P() + mu[N] * inst.Gamma;
    if (supergradient) *supergradient = evaluate_policy(inst, mu, samples).residuals;
    return value;
}

}  // namespace

EllipsoidResult dual_ellipsoid_baseline(const Instance& inst, const std::vector<State>& samples,
                                        const EllipsoidOptions& options) {
    inst.validate();
    if (samples.empty()) throw InvalidInput("dual_ellipsoid_baseline: empty sample set");
    const int n = inst.N + 1;
    EllipsoidResult best;
    double radius = options.radius;
    for (int attempt = 0; attempt <= options.max_restarts; ++attempt) {
        Vector c = Vector::Constant(n, options.center);
        Matrix Pm = radius * radius * Matrix::Identity(n, n);
        best = EllipsoidResult{};
        best.dual_value = -std::numeric_limits<double>::infinity();
        best.restarts = attempt;
        bool degenerate = false;
        const double scale = static_cast<double>(n * n) / static_cast<double>(n * n - 1);
        int it = 0;
        for (; it < options.max_iters; ++it) {
            Vector g;  // cut normal: keep {mu : g^T (mu - c) <= 0}
            Eigen::Index k;
            if (c.minCoeff(&k) < 0.0) {
                g = -Vector::Unit(n, k);
            } else {
                Vector s;
                const double d = dual_value(inst, c, samples, &s);
                if (d > best.dual_value) {
                    best.dual_value = d;
                    best.multipliers = c;
                }
                g = -s;
            }
            const double gPg = g.dot(Pm * g);
            if (!(gPg > 0.0) || !std::isfinite(gPg)) {
                if (g.squaredNorm() == 0.0 && best.multipliers.size() > 0) break;  // exact dual optimum
                degenerate = true;
                break;
            }
            const Vector Pg = Pm * g / std::sqrt(gPg);
            c -= Pg / (n + 1.0);
            Pm = scale * (Pm - (2.0 / (n + 1.0)) * Pg * Pg.transpose());
            Pm = 0.5 * (Pm + Pm.transpose());
            const double det = Pm.determinant();
            if (!(det > 0.0)) {
                degenerate = true;
                break;
            }
            best.volume = std::sqrt(det);
            if (best.volume < options.volume_tolerance) break;
        }
        best.iterations = it;
        if (!degenerate && best.multipliers.size() == n) break;
        radius *= 10.0;
        if (attempt == options.max_restarts) throw NumericalFailure("dual_ellipsoid_baseline: degenerate ellipsoid");
    }
    best.policy = evaluate_policy(inst, best.multipliers, samples);
    best.slackness = best.multipliers.cwiseProduct(best.policy.residuals).cwiseAbs().maxCoeff();
    return best;
}

Vector short_term_constraint_baseline(const Instance& inst, const State& xi) {
    inst.validate();
    const int N = inst.N;
    if (xi.size() != 2 * N) throw InvalidInput("short_term_constraint_baseline: state has the wrong length");
    const double P = inst.P();
    const Vector a = xi.head(N);
    const Vector b = xi.tail(N);

    const Vector upper = Vector::Constant(N, P);
    // Gamma == 0 forces zero power on every user with b_i > 0; the rest take the full budget.
    if (inst.Gamma <= 0.0) return (b.array() > 0.0).select(Vector::Zero(N), upper);

    ConvexProgram program;
    program.box = Box(Vector::Zero(N), upper);
    program.objective = SmoothFunction{[a](const Vector& p, Vector* grad, Matrix* hess) {
        const double s = 1.0 + a.dot(p);
        if (grad) *grad = -a / s;
        if (hess) *hess = a * a.transpose() / (s * s);
        return -std::log(s);
    }};
    const double Gamma = inst.Gamma;
    program.constraints.push_back(SmoothFunction{[b, Gamma](const Vector& p, Vector* grad, Matrix* hess) {
        if (grad) *grad = b;
        if (hess) *hess = Matrix::Zero(b.size(), b.size());
        return b.dot(p) - Gamma;
    }});
    const double load = b.dot(upper);
    const double t = load > 0.0 ? std::min(0.5, 0.5 * Gamma / load) : 0.5;
    const Vector start = t * upper;
    const BarrierSolution sol = minimize_barrier(program, start);
    Vector p = polish_active_set(program, sol).z;
    return p.cwiseMax(0.0).cwiseMin(upper);
}

double short_term_constraint_capacity(const Instance& inst, const std::vector<State>& samples) {
    if (samples.empty()) throw InvalidInput("short_term_constraint_capacity: empty sample set");
    double total = 0.0;
    for (const State& xi : samples) total += capacity(xi, short_term_constraint_baseline(inst, xi));
    return total / static_cast<double>(samples.size());
}

}  // namespace pdd::cmac
