#include "pdd/surrogate.hpp"

#include <cmath>
#include <string>

namespace pdd {

namespace {

void require_size(const Vector& v, Eigen::Index n, const char* what) {
    if (v.size() != n) {
        throw InvalidInput(std::string("surrogate: ") + what + " has length " + std::to_string(v.size()) +
                           ", expected " + std::to_string(n));
    }
}

}  // namespace

SurrogateTracker::SurrogateTracker(int n_x, int m, double tau_value)
    : fx(Vector::Zero(n_x)), fy(Vector::Zero(n_x)), flambda(Vector::Zero(m)), tau(tau_value),
      previous_fx(Vector::Zero(n_x)) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("SurrogateTracker: tau must be positive");
}

void update_trackers(SurrogateTracker& tracker, double rho, std::span<const SampleStatistics> batch) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidInput("update_trackers: rho must lie in (0, 1]");
    if (batch.empty()) throw InvalidInput("update_trackers: empty batch");
    const Eigen::Index n_x = tracker.fx.size();
    double value = 0.0;
    Vector gx = Vector::Zero(n_x);
    Vector gy = Vector::Zero(n_x);
    Vector gl = Vector::Zero(tracker.flambda.size());
    for (const SampleStatistics& s : batch) {
        require_size(s.grad_x, n_x, "grad_x");
        require_size(s.pushed_x, n_x, "pushed_x");
        require_size(s.grad_lambda, gl.size(), "grad_lambda");
        value += s.value;
        gx += s.grad_x;
        gy += s.pushed_x;
        gl += s.grad_lambda;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    tracker.previous_f = tracker.f;
    tracker.previous_fx = tracker.fx;
    tracker.f = (1.0 - rho) * tracker.f + rho * inv * value;
    tracker.fx = (1.0 - rho) * tracker.fx + rho * inv * gx;
    tracker.fy = (1.0 - rho) * tracker.fy + rho * inv * gy;
    tracker.flambda = (1.0 - rho) * tracker.flambda + rho * inv * gl;
}

double SurrogateModel::evaluate(const Vector& x, const Vector& lambda, Vector* grad, Matrix* hess) const {
    require_size(x, anchor.x.size(), "x");
    require_size(lambda, anchor.lambda.size(), "lambda");
    const Eigen::Index nx = x.size();
    const Eigen::Index nl = lambda.size();
    const Vector dx = x - anchor.x;
    const Vector dl = lambda - anchor.lambda;
    double value = constant + lin_x.dot(dx) + lin_lambda.dot(dl) + tau * (dx.squaredNorm() + dl.squaredNorm());
    if (grad) {
        grad->resize(nx + nl);
        grad->head(nx) = lin_x + 2.0 * tau * dx;
        grad->tail(nl) = lin_lambda + 2.0 * tau * dl;
    }
    if (hess) *hess = 2.0 * tau * Matrix::Identity(nx + nl, nx + nl);
    if (convex_weight > 0.0 && convex_terms.fn) {
        for (std::size_t j = 0; j < convex_terms.y.size(); ++j) {
            const ConvexPartEval c = convex_terms.fn(convex_terms.index, x, convex_terms.y[j], convex_terms.xi[j]);
            value += convex_weight * c.value;
            if (grad) grad->head(nx) += convex_weight * c.grad_x;
            if (hess) hess->topLeftCorner(nx, nx) += convex_weight * c.hess_xx;
        }
    }
    return value;
}

SmoothFunction SurrogateModel::as_function() const {
    const Eigen::Index nx = anchor.x.size();
    const Eigen::Index nl = anchor.lambda.size();
    return SmoothFunction{[model = *this, nx, nl](const Vector& z, Vector* grad, Matrix* hess) {
        return model.evaluate(z.head(nx), z.segment(nx, nl), grad, hess);
    }};
}

SurrogateModel build_surrogate(const SurrogateTracker& tracker, const LongTermIterate& anchor, double rho,
                               std::span<const SampleStatistics> batch, ConvexTerms convex_terms) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidInput("build_surrogate: rho must lie in (0, 1]");
    if (batch.empty()) throw InvalidInput("build_surrogate: empty batch");
    const Eigen::Index n_x = tracker.fx.size();
    require_size(anchor.x, n_x, "anchor x");
    require_size(anchor.lambda, tracker.flambda.size(), "anchor lambda");
    const bool has_convex = static_cast<bool>(convex_terms.fn);
    if (has_convex && (convex_terms.y.size() != batch.size() || convex_terms.xi.size() != batch.size())) {
        throw InvalidInput("build_surrogate: convex terms must hold one (y, xi) per batch sample");
    }

    double nonconvex_value = 0.0;
    Vector nonconvex_grad = Vector::Zero(n_x);
    for (const SampleStatistics& s : batch) {
        nonconvex_value += s.value - s.convex_value;
        nonconvex_grad += s.grad_x;
        if (s.convex_grad_x.size() > 0) {
            require_size(s.convex_grad_x, n_x, "convex_grad_x");
            nonconvex_grad -= s.convex_grad_x;
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());

    SurrogateModel model;
    model.anchor = anchor;
    model.tau = tracker.tau;
    model.constant = (1.0 - rho) * tracker.previous_f + rho * inv * nonconvex_value;
    model.lin_x = (1.0 - rho) * tracker.previous_fx + tracker.fy + rho * inv * nonconvex_grad;
    model.lin_lambda = tracker.flambda;
    if (has_convex) {
        model.convex_weight = rho * inv;
        model.convex_terms = std::move(convex_terms);
    }
    return model;
}

}  // namespace pdd
