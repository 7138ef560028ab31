#include "pdd/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdd {

namespace {

void require_dim(const Vector& v, Eigen::Index n, const char* what) {
    if (v.size() != n) {
        throw InvalidInput(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                           std::to_string(v.size()));
    }
}

}  // namespace

Box::Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) {
        throw InvalidInput("Box: bound lengths differ");
    }
    for (Eigen::Index k = 0; k < lower_.size(); ++k) {
        if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || lower_[k] > upper_[k]) {
            throw InvalidInput("Box: bounds must be finite with lower <= upper (coordinate " + std::to_string(k) +
                               ")");
        }
    }
}

Box Box::uniform(Eigen::Index n, double lower, double upper) {
    return Box(Vector::Constant(n, lower), Vector::Constant(n, upper));
}

bool Box::contains(const Vector& v, double tol) const {
    if (v.size() != size()) return false;
    return ((v.array() >= lower_.array() - tol) && (v.array() <= upper_.array() + tol)).all();
}

Vector Box::project(const Vector& v) const {
    require_dim(v, size(), "Box::project");
    return v.cwiseMax(lower_).cwiseMin(upper_);
}

Vector Box::interior(const Vector& v, double margin, double cap) const {
    Vector out = project(v);
    for (Eigen::Index k = 0; k < out.size(); ++k) {
        const double width = upper_[k] - lower_[k];
        const double delta = std::min(margin * width, cap);
        out[k] = std::clamp(out[k], lower_[k] + delta, upper_[k] - delta);
    }
    return out;
}

Box concat(const Box& a, const Box& b) {
    Vector lo(a.size() + b.size());
    Vector hi(a.size() + b.size());
    lo << a.lower_, b.lower_;
    hi << a.upper_, b.upper_;
    return Box(std::move(lo), std::move(hi));
}

void ProblemDefinition::validate() const {
    if (n_x < 0 || n_y < 0 || m < 0 || n < 0) throw InvalidInput("ProblemDefinition: negative dimension");
    if (domain_x.size() != n_x) throw InvalidInput("ProblemDefinition: domain_x dimension mismatch");
    if (domain_y.size() != n_y) throw InvalidInput("ProblemDefinition: domain_y dimension mismatch");
    if (!(lambda_cap > 0.0) || !std::isfinite(lambda_cap)) throw InvalidInput("ProblemDefinition: lambda_cap");
    if (!sample_fn) throw InvalidInput("ProblemDefinition: sample_fn missing");
    if (n > 0 && !short_fn) throw InvalidInput("ProblemDefinition: short_fn missing for n > 0");
    if (!sampler) throw InvalidInput("ProblemDefinition: sampler missing");
}

SampleEval evaluate_sample(const ProblemDefinition& problem, int i, const Vector& x, const Vector& y,
                           const State& xi) {
    if (i < 0 || i > problem.m) {
        throw InvalidInput("evaluate_sample: index " + std::to_string(i) + " out of range 0.." +
                           std::to_string(problem.m));
    }
    require_dim(x, problem.n_x, "evaluate_sample x");
    require_dim(y, problem.n_y, "evaluate_sample y");
    SampleEval out = problem.sample_fn(i, x, y, xi);
    require_dim(out.grad_x, problem.n_x, "evaluate_sample grad_x");
    require_dim(out.grad_y, problem.n_y, "evaluate_sample grad_y");
    return out;
}

CurvatureProduct sample_curvature(const ProblemDefinition& problem, int i, const Vector& x, const Vector& y,
                                  const State& xi, const Vector& w) {
    if (problem.sample_curvature) return problem.sample_curvature(i, x, y, xi, w);
    const double wn = w.norm();
    if (wn == 0.0) return {Vector::Zero(problem.n_y), Vector::Zero(problem.n_x)};
    const double eps = 1e-6 * (1.0 + y.norm()) / wn;
    const SampleEval plus = problem.sample_fn(i, x, y + eps * w, xi);
    const SampleEval minus = problem.sample_fn(i, x, y - eps * w, xi);
    return {(plus.grad_y - minus.grad_y) / (2.0 * eps), (plus.grad_x - minus.grad_x) / (2.0 * eps)};
}

ConstraintEval evaluate_short_constraint(const ProblemDefinition& problem, int j, const Vector& y, const State& xi) {
    if (j < 0 || j >= problem.n) throw InvalidInput("evaluate_short_constraint: index out of range");
    ConstraintEval out = problem.short_fn(j, y, xi);
    require_dim(out.grad_y, problem.n_y, "evaluate_short_constraint grad_y");
    return out;
}

Matrix short_constraint_hessian(const ProblemDefinition& problem, int j, const Vector& y, const State& xi) {
    const int n = problem.n_y;
    Matrix hess(n, n);
    for (int k = 0; k < n; ++k) {
        const Vector e = Vector::Unit(n, k);
        if (problem.short_curvature) {
            hess.col(k) = problem.short_curvature(j, y, xi, e);
        } else {
            const double eps = 1e-6 * (1.0 + std::abs(y[k]));
            hess.col(k) = (problem.short_fn(j, y + eps * e, xi).grad_y - problem.short_fn(j, y - eps * e, xi).grad_y) /
                          (2.0 * eps);
        }
    }
    return 0.5 * (hess + hess.transpose());
}

Vector lagrangian_grad_y(const ProblemDefinition& problem, const Vector& x, const Vector& lambda, const Vector& y,
                         const State& xi) {
    require_dim(lambda, problem.m, "lagrangian_grad_y lambda");
    Vector grad = evaluate_sample(problem, 0, x, y, xi).grad_y;
    for (int i = 1; i <= problem.m; ++i) {
        if (lambda[i - 1] != 0.0) grad += lambda[i - 1] * evaluate_sample(problem, i, x, y, xi).grad_y;
    }
    return grad;
}

CurvatureProduct lagrangian_curvature(const ProblemDefinition& problem, const Vector& x, const Vector& lambda,
                                      const Vector& y, const State& xi, const Vector& w) {
    CurvatureProduct total = sample_curvature(problem, 0, x, y, xi, w);
    for (int i = 1; i <= problem.m; ++i) {
        if (lambda[i - 1] == 0.0) continue;
        const CurvatureProduct c = sample_curvature(problem, i, x, y, xi, w);
        total.yy += lambda[i - 1] * c.yy;
        total.xy += lambda[i - 1] * c.xy;
    }
    return total;
}

StepValues step_values(const StepSchedule& schedule, int t) {
    if (t < 0) throw InvalidInput("step_values: negative iteration");
    const double rho = schedule.rho_scale / std::pow(schedule.rho_shift + t, schedule.rho_exponent);
    const double gamma = schedule.gamma_scale / (schedule.gamma_shift + t);
    return {std::min(rho, 1.0), std::min(gamma, 1.0)};
}

ShortTermKkt short_term_kkt(const ProblemDefinition& problem, const Vector& x, const Vector& lambda, const Vector& y,
                            const std::optional<Vector>& nu, const State& xi) {
    ShortTermKkt e;
    Vector grad = lagrangian_grad_y(problem, x, lambda, y, xi);
    if (problem.n > 0) {
        if (!nu) throw InvalidInput("short_term_kkt: multipliers required when short-term constraints exist");
        require_dim(*nu, problem.n, "short_term_kkt nu");
        double feas = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < problem.n; ++j) {
            const ConstraintEval h = evaluate_short_constraint(problem, j, y, xi);
            grad += (*nu)[j] * h.grad_y;
            feas = std::max(feas, h.value);
            e.slackness = std::max(e.slackness, std::abs((*nu)[j] * h.value));
        }
        e.feasibility = feas;
    }
    e.stationarity = (y - problem.domain_y.project(y - grad)).norm();
    return e;
}

KktReport kkt_report(const ProblemDefinition& problem, const LongTermIterate& iterate,
                     std::span<const ShortTermResult> results, std::span<const State> states, const Vector& saa_f) {
    if (results.empty()) throw InvalidInput("kkt_report: empty batch");
    if (results.size() != states.size()) throw InvalidInput("kkt_report: results/states length mismatch");
    require_dim(saa_f, problem.m, "kkt_report saa_f");
    require_dim(iterate.lambda, problem.m, "kkt_report lambda");

    KktReport report;
    Vector grad_x = Vector::Zero(problem.n_x);
    bool any_short = false;
    for (std::size_t s = 0; s < results.size(); ++s) {
        const ShortTermResult& r = results[s];
        if (problem.n > 0 && !r.nu) {
            throw InvalidInput("kkt_report: sample " + std::to_string(s) + " lacks short-term multipliers");
        }
        const ShortTermKkt e = short_term_kkt(problem, iterate.x, iterate.lambda, r.y, r.nu, states[s]);
        report.stationarity_short += e.stationarity;
        if (problem.n > 0) {
            report.feasibility_short = any_short ? std::max(report.feasibility_short, e.feasibility) : e.feasibility;
            any_short = true;
        }
        report.slackness_short = std::max(report.slackness_short, e.slackness);
        if (problem.n_x > 0) {
            grad_x += evaluate_sample(problem, 0, iterate.x, r.y, states[s]).grad_x;
            for (int i = 1; i <= problem.m; ++i) {
                grad_x += iterate.lambda[i - 1] * evaluate_sample(problem, i, iterate.x, r.y, states[s]).grad_x;
            }
        }
    }
    const auto count = static_cast<double>(results.size());
    report.stationarity_short /= count;
    if (problem.n_x > 0) {
        grad_x /= count;
        report.stationarity_long = (iterate.x - problem.domain_x.project(iterate.x - grad_x)).norm();
    }
    report.feasibility_long = saa_f;
    for (int i = 0; i < problem.m; ++i) {
        report.slackness_long = std::max(report.slackness_long, std::abs(iterate.lambda[i] * saa_f[i]));
    }
    return report;
}

}  // namespace pdd
