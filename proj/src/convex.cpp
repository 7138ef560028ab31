#include "pdd/convex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BarrierEval {
    double value = kInf;
    Vector grad;
    Matrix hess;
};

/// t f0(z) - sum log(-f_i(z)) - sum log(z - l) - sum log(u - z); +inf outside the strict interior.
BarrierEval barrier_value(const ConvexProgram& program, double t, const Vector& z, bool derivatives) {
    BarrierEval out;
    const Vector& lo = program.box.lower();
    const Vector& hi = program.box.upper();
    if (!z.allFinite()) return out;
    if (((z - lo).array() <= 0.0).any() || ((hi - z).array() <= 0.0).any()) return out;

    Vector g;
    Matrix h;
    double value = t * program.objective(z, derivatives ? &g : nullptr, derivatives ? &h : nullptr);
    if (derivatives) {
        out.grad = t * g;
        out.hess = t * h;
    }
    for (const auto& c : program.constraints) {
        const double f = c(z, derivatives ? &g : nullptr, derivatives ? &h : nullptr);
        if (!(f < 0.0)) return BarrierEval{};
        value -= std::log(-f);
        if (derivatives) {
            out.grad += g / (-f);
            out.hess += h / (-f) + (g * g.transpose()) / (f * f);
        }
    }
    const Eigen::ArrayXd sl = (z - lo).array();
    const Eigen::ArrayXd su = (hi - z).array();
    value -= sl.log().sum() + su.log().sum();
    if (derivatives) {
        out.grad += (-1.0 / sl + 1.0 / su).matrix();
        out.hess.diagonal() += (1.0 / sl.square() + 1.0 / su.square()).matrix();
    }
    if (!std::isfinite(value)) return BarrierEval{};
    out.value = value;
    return out;
}

Vector newton_direction(const Matrix& hess, const Vector& grad) {
    const Matrix sym = 0.5 * (hess + hess.transpose());
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() == Eigen::Success) {
        Vector d = llt.solve(-grad);
        if (d.allFinite()) return d;
    }
    const double scale = std::max(1.0, sym.diagonal().cwiseAbs().maxCoeff());
    for (double shift = 1e-12; shift < 1e6; shift *= 100.0) {
        const Matrix reg = sym + shift * scale * Matrix::Identity(sym.rows(), sym.cols());
        Eigen::LLT<Matrix> retry(reg);
        if (retry.info() == Eigen::Success) return retry.solve(-grad);
    }
    throw NumericalFailure("barrier Newton system is not positive definite");
}

/// Damped Newton centering for a fixed t; returns the number of steps taken.
int center(const ConvexProgram& program, double t, Vector& z, const BarrierOptions& options, int budget) {
    int steps = 0;
    BarrierEval cur = barrier_value(program, t, z, true);
    if (!std::isfinite(cur.value)) throw NumericalFailure("barrier centering started outside the strict interior");
    while (true) {
        if (steps >= budget) throw NumericalFailure("barrier method exceeded its Newton step budget");
        const Vector d = newton_direction(cur.hess, cur.grad);
        const double decrement = -cur.grad.dot(d);
        const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(cur.value);
        if (decrement * 0.5 <= std::max(options.newton_tolerance, floor)) break;
        double s = 1.0;
        bool moved = false;
        while (s > 1e-20) {
            const Vector trial = z + s * d;
            const BarrierEval probe = barrier_value(program, t, trial, false);
            if (std::isfinite(probe.value) && probe.value < cur.value &&
                probe.value <= cur.value - 0.25 * s * decrement) {
                z = trial;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        ++steps;
        if (!moved) break;
        cur = barrier_value(program, t, z, true);
    }
    return steps;
}

}  // namespace

BarrierSolution minimize_barrier(const ConvexProgram& program, const Vector& start, const BarrierOptions& options) {
    if (!program.objective.eval) throw InvalidInput("minimize_barrier: objective missing");
    if (start.size() != program.box.size()) throw InvalidInput("minimize_barrier: start dimension mismatch");
    if (((program.box.upper() - program.box.lower()).array() <= 0.0).any()) {
        throw InvalidInput("minimize_barrier: box has a zero-width coordinate");
    }
    Vector z = start;
    if (!std::isfinite(barrier_value(program, 1.0, z, false).value)) {
        throw InvalidInput("minimize_barrier: start is not strictly feasible");
    }
    const double count = static_cast<double>(program.constraints.size()) + 2.0 * static_cast<double>(z.size());
    double t = options.initial_t;
    {
        // Start at t = count / gap with the gap bounded by the objective's own Newton decrement.
        Vector g0;
        Matrix h0;
        (void)program.objective(z, &g0, &h0);
        Eigen::LLT<Matrix> llt(0.5 * (h0 + h0.transpose()));
        if (llt.info() == Eigen::Success) {
            const double gap = 0.5 * g0.dot(llt.solve(g0));
            if (std::isfinite(gap) && gap > count) t = std::min(t, std::max(1e-12, count / gap));
        }
    }
    int steps = 0;
    while (true) {
        steps += center(program, t, z, options, options.max_newton_steps - steps);
        if (count / t <= options.gap_tolerance) break;
        t *= options.growth;
    }

    BarrierSolution out;
    out.z = z;
    out.gap = count / t;
    out.newton_steps = steps;
    out.objective = program.objective(z);
    out.multipliers.resize(static_cast<Eigen::Index>(program.constraints.size()));
    for (std::size_t i = 0; i < program.constraints.size(); ++i) {
        out.multipliers[static_cast<Eigen::Index>(i)] = 1.0 / (t * -program.constraints[i](z));
    }
    out.box_lower = (1.0 / (t * (z - program.box.lower()).array())).matrix();
    out.box_upper = (1.0 / (t * (program.box.upper() - z).array())).matrix();
    return out;
}

MaxConstraintSolution minimize_max_constraint(const std::vector<SmoothFunction>& functions, const Box& box,
                                              const Vector& start, const BarrierOptions& options) {
    if (functions.empty()) throw InvalidInput("minimize_max_constraint: no functions");
    if (start.size() != box.size()) throw InvalidInput("minimize_max_constraint: start dimension mismatch");
    const Eigen::Index n = box.size();
    const Vector z0 = box.interior(start, 1e-3, 1e-2);

    double alpha0 = -kInf;
    double spread = 1.0;
    double alpha_floor = -kInf;  // max_i of the tangent-plane minimum over the box bounds the optimal alpha from below
    for (const auto& f : functions) {
        Vector g;
        const double v = f(z0, &g, nullptr);
        if (!std::isfinite(v) || !g.allFinite()) {
            throw NumericalFailure("minimize_max_constraint: non-finite function value");
        }
        alpha0 = std::max(alpha0, v);
        spread = std::max(spread, std::abs(v));
        const Vector down = g.cwiseProduct(box.lower() - z0).cwiseMin(g.cwiseProduct(box.upper() - z0));
        alpha_floor = std::max(alpha_floor, v + down.sum());
    }
    alpha0 += 1.0;

    Vector lo(n + 1);
    Vector hi(n + 1);
    lo << box.lower(), std::max(alpha0 - 1e8 * spread, alpha_floor - 1.0 - 1e-3 * std::abs(alpha_floor));
    hi << box.upper(), alpha0 + 1e3 * spread;

    ConvexProgram epi;
    epi.box = Box(lo, hi);
    epi.objective.eval = [n](const Vector& w, Vector* g, Matrix* h) {
        if (g) *g = Vector::Unit(n + 1, n);
        if (h) *h = Matrix::Zero(n + 1, n + 1);
        return w[n];
    };
    for (const auto& f : functions) {
        epi.constraints.push_back({[f, n](const Vector& w, Vector* g, Matrix* h) {
            Vector gz;
            Matrix hz;
            const double v = f(w.head(n), g ? &gz : nullptr, h ? &hz : nullptr);
            if (g) {
                g->resize(n + 1);
                g->head(n) = gz;
                (*g)[n] = -1.0;
            }
            if (h) {
                *h = Matrix::Zero(n + 1, n + 1);
                h->topLeftCorner(n, n) = hz;
            }
            return v - w[n];
        }});
    }
    Vector w0(n + 1);
    w0 << z0, alpha0;
    BarrierOptions epi_options = options;
    const double count = static_cast<double>(functions.size()) + 2.0 * static_cast<double>(n + 1);
    epi_options.initial_t = std::min(options.initial_t, count / (hi[n] - lo[n]));
    const BarrierSolution sol = minimize_barrier(epi, w0, epi_options);

    MaxConstraintSolution out;
    out.z = sol.z.head(n);
    out.alpha = -kInf;
    for (const auto& f : functions) out.alpha = std::max(out.alpha, f(out.z));
    out.weights = sol.multipliers;
    const double total = out.weights.sum();
    if (total > 0.0) out.weights /= total;
    out.newton_steps = sol.newton_steps;
    return out;
}

PhaseOneOutcome phase_one(const ConvexProgram& program, const Vector& start, const BarrierOptions& options) {
    PhaseOneOutcome out;
    out.solution = minimize_max_constraint(program.constraints, program.box, start, options);
    out.feasible = out.solution.alpha <= -options.phase_margin;
    return out;
}

SmoothFunction quadratic_function(double c, Vector g, Matrix hess, Vector z0) {
    if (g.size() != z0.size() || hess.rows() != z0.size() || hess.cols() != z0.size()) {
        throw InvalidInput("quadratic_function: dimension mismatch");
    }
    return {[c, g = std::move(g), hess = std::move(hess), z0 = std::move(z0)](const Vector& z, Vector* grad,
                                                                                Matrix* h) {
        const Vector d = z - z0;
        const Vector hd = hess * d;
        if (grad) *grad = g + hd;
        if (h) *h = hess;
        return c + g.dot(d) + 0.5 * d.dot(hd);
    }};
}

}  // namespace pdd

namespace pdd {

ActiveSetSolution polish_active_set(const ConvexProgram& program, const BarrierSolution& barrier) {
    const Eigen::Index n = barrier.z.size();
    const auto nc = static_cast<Eigen::Index>(program.constraints.size());
    const Vector& lo = program.box.lower();
    const Vector& hi = program.box.upper();

    ActiveSetSolution guess;
    guess.z = barrier.z;
    guess.free = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, true);
    guess.multipliers = Vector::Zero(nc);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double width = hi[k] - lo[k];
        const double near = 1e-6 * std::max(1.0, width);
        if (guess.z[k] - lo[k] <= near && barrier.box_lower[k] > barrier.box_upper[k] && barrier.box_lower[k] > 1e-9) {
            guess.free[k] = false;
            guess.z[k] = lo[k];
        } else if (hi[k] - guess.z[k] <= near && barrier.box_upper[k] > 1e-9) {
            guess.free[k] = false;
            guess.z[k] = hi[k];
        }
    }
    for (Eigen::Index i = 0; i < nc; ++i) {
        const double slack = -program.constraints[static_cast<std::size_t>(i)](barrier.z);
        if (barrier.multipliers[i] > 1e-8 && slack < 1e-5) guess.active.push_back(static_cast<int>(i));
    }

    std::vector<Eigen::Index> F;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (guess.free[k]) F.push_back(k);
    }
    const auto nf = static_cast<Eigen::Index>(F.size());
    const auto na = static_cast<Eigen::Index>(guess.active.size());

    ActiveSetSolution fallback;
    fallback.z = barrier.z;
    fallback.free = guess.free;
    fallback.active = guess.active;
    fallback.multipliers = Vector::Zero(nc);
    for (int i : guess.active) fallback.multipliers[i] = barrier.multipliers[i];

    Vector z = guess.z;
    Vector mu(na);
    for (Eigen::Index a = 0; a < na; ++a) mu[a] = barrier.multipliers[guess.active[static_cast<std::size_t>(a)]];

    auto residual = [&](const Vector& zz, const Vector& mm, Matrix* K) {
        Vector g;
        Matrix h;
        program.objective(zz, &g, K ? &h : nullptr);
        Vector lag = g;
        Matrix hl = K ? h : Matrix();
        Matrix C(na, n);
        Vector c(na);
        for (Eigen::Index a = 0; a < na; ++a) {
            Vector gi;
            Matrix hc;
            c[a] = program.constraints[static_cast<std::size_t>(guess.active[static_cast<std::size_t>(a)])](
                zz, &gi, K ? &hc : nullptr);
            C.row(a) = gi.transpose();
            lag += mm[a] * gi;
            if (K) hl += mm[a] * hc;
        }
        Vector r(nf + na);
        for (Eigen::Index f = 0; f < nf; ++f) r[f] = lag[F[static_cast<std::size_t>(f)]];
        r.tail(na) = c;
        if (K) {
            K->setZero(nf + na, nf + na);
            for (Eigen::Index f = 0; f < nf; ++f) {
                for (Eigen::Index e = 0; e < nf; ++e) (*K)(f, e) = hl(F[static_cast<std::size_t>(f)], F[static_cast<std::size_t>(e)]);
                for (Eigen::Index a = 0; a < na; ++a) {
                    (*K)(f, nf + a) = C(a, F[static_cast<std::size_t>(f)]);
                    (*K)(nf + a, f) = C(a, F[static_cast<std::size_t>(f)]);
                }
            }
        }
        return r;
    };

    for (int iter = 0; iter < 30; ++iter) {
        Matrix K;
        const Vector r = residual(z, mu, &K);
        if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, z.lpNorm<Eigen::Infinity>())) break;
        Eigen::FullPivLU<Matrix> lu(K);
        if (!lu.isInvertible()) return fallback;
        const Vector d = lu.solve(-r);
        for (Eigen::Index f = 0; f < nf; ++f) z[F[static_cast<std::size_t>(f)]] += d[f];
        mu += d.tail(na);
        if (!z.allFinite() || !mu.allFinite()) return fallback;
        if (d.lpNorm<Eigen::Infinity>() <= 1e-16 * std::max(1.0, z.lpNorm<Eigen::Infinity>())) break;
    }

    // Accept only a point that is feasible, sign-consistent, and close to the barrier point.
    if ((z - barrier.z).lpNorm<Eigen::Infinity>() > 1e-4 * std::max(1.0, barrier.z.lpNorm<Eigen::Infinity>())) {
        return fallback;
    }
    if (!program.box.contains(z, 0.0)) return fallback;
    if ((mu.array() < 0.0).any()) return fallback;
    for (Eigen::Index i = 0; i < nc; ++i) {
        if (std::find(guess.active.begin(), guess.active.end(), static_cast<int>(i)) != guess.active.end()) continue;
        if (program.constraints[static_cast<std::size_t>(i)](z) > 0.0) return fallback;
    }
    Vector g;
    program.objective(z, &g, nullptr);
    for (Eigen::Index a = 0; a < na; ++a) {
        Vector gi;
        program.constraints[static_cast<std::size_t>(guess.active[static_cast<std::size_t>(a)])](z, &gi, nullptr);
        g += mu[a] * gi;
    }
    const double gscale = 1e-8 * std::max(1.0, g.lpNorm<Eigen::Infinity>());
    for (Eigen::Index k = 0; k < n; ++k) {
        if (guess.free[k]) continue;
        if (z[k] == lo[k] && g[k] < -gscale) return fallback;
        if (z[k] == hi[k] && g[k] > gscale) return fallback;
    }

    guess.z = z;
    for (Eigen::Index a = 0; a < na; ++a) guess.multipliers[guess.active[static_cast<std::size_t>(a)]] = mu[a];
    return guess;
}

}  // namespace pdd
