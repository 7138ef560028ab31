#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "pdd/core.hpp"

#include <cmath>
#include <vector>

using namespace pdd;

namespace {

/// Smooth nonconvex toy with one long-term and one short-term constraint.
ProblemDefinition smooth_toy() {
    ProblemDefinition p;
    p.n_x = 1;
    p.n_y = 2;
    p.m = 1;
    p.n = 1;
    p.domain_x = Box::uniform(1, -10.0, 10.0);
    p.domain_y = Box::uniform(2, -5.0, 5.0);
    p.sample_fn = [](int i, const Vector& x, const Vector& y, const State& xi) {
        SampleEval e;
        e.grad_x = Vector::Zero(1);
        e.grad_y = Vector::Zero(2);
        if (i == 0) {
            e.value = std::pow(x[0] - xi[0], 2) + 0.5 * (y - Vector::Constant(2, x[0])).squaredNorm() +
                      std::sin(y[0]) * x[0];
            e.grad_x[0] = 2.0 * (x[0] - xi[0]) - (y.sum() - 2.0 * x[0]) + std::sin(y[0]);
            e.grad_y = y - Vector::Constant(2, x[0]);
            e.grad_y[0] += std::cos(y[0]) * x[0];
        } else {
            e.value = x[0] * y[1] - 2.0;
            e.grad_x[0] = y[1];
            e.grad_y[1] = x[0];
        }
        return e;
    };
    p.short_fn = [](int, const Vector& y, const State&) {
        return ConstraintEval{y.squaredNorm() - 4.0, 2.0 * y};
    };
    p.sampler = [](Rng& rng) {
        std::normal_distribution<double> d(0.0, 1.0);
        State s(1);
        s[0] = d(rng);
        return s;
    };
    return p;
}

ProblemDefinition square_toy() {
    ProblemDefinition p;
    p.n_x = 1;
    p.n_y = 0;
    p.domain_x = Box::uniform(1, -10.0, 10.0);
    p.domain_y = Box(Vector(0), Vector(0));
    p.sample_fn = [](int, const Vector& x, const Vector&, const State&) {
        return SampleEval{x[0] * x[0], Vector::Constant(1, 2.0 * x[0]), Vector(0)};
    };
    p.sampler = [](Rng&) { return State(0); };
    return p;
}

}  // namespace

TEST_CASE("box projection, containment and interior") {
    const Box box = Box::uniform(2, 0.0, 1.0);
    Vector v(2);
    v << 1.5, -0.2;
    const Vector p = box.project(v);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
    CHECK(box.contains(p));
    CHECK_FALSE(box.contains(v));
    const Vector in = box.interior(p, 1e-3, 1.0);
    CHECK(in[0] == doctest::Approx(0.999));
    CHECK(in[1] == doctest::Approx(0.001));
    CHECK_THROWS_AS(Box(Vector::Zero(2), Vector::Zero(3)), InvalidInput);
    CHECK_THROWS_AS(Box(Vector::Ones(1), Vector::Zero(1)), InvalidInput);
    Vector inf(1);
    inf << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Box(Vector::Zero(1), inf), InvalidInput);
    const Box joined = concat(box, Box::uniform(1, -2.0, 2.0));
    CHECK(joined.size() == 3);
    CHECK(joined.lower()[2] == -2.0);
}

TEST_CASE("problem validation") {
    ProblemDefinition p = smooth_toy();
    CHECK_NOTHROW(p.validate());
    p.short_fn = nullptr;
    CHECK_THROWS_AS(p.validate(), InvalidInput);
    p = smooth_toy();
    p.domain_y = Box::uniform(3, 0.0, 1.0);
    CHECK_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("evaluate_sample checks indices and dimensions") {
    const ProblemDefinition p = smooth_toy();
    const Vector x = Vector::Constant(1, 0.3);
    const Vector y = Vector::Constant(2, 0.1);
    const State xi = State::Constant(1, 0.2);
    CHECK_THROWS_AS((void)evaluate_sample(p, 2, x, y, xi), InvalidInput);
    CHECK_THROWS_AS((void)evaluate_sample(p, -1, x, y, xi), InvalidInput);
    CHECK_THROWS_AS((void)evaluate_sample(p, 0, Vector::Zero(2), y, xi), InvalidInput);
    CHECK_NOTHROW((void)evaluate_sample(p, 1, x, y, xi));
}

TEST_CASE("sample gradients match central differences") {
    const ProblemDefinition p = smooth_toy();
    Rng rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = Vector::Constant(1, u(rng));
        Vector y(2);
        y << u(rng), u(rng);
        const State xi = p.sampler(rng);
        for (int i = 0; i <= p.m; ++i) {
            const SampleEval e = evaluate_sample(p, i, x, y, xi);
            const Vector fx = oracle::central_gradient(
                [&](const Vector& z) { return evaluate_sample(p, i, z, y, xi).value; }, x);
            const Vector fy = oracle::central_gradient(
                [&](const Vector& z) { return evaluate_sample(p, i, x, z, xi).value; }, y);
            CHECK(oracle::max_relative_error(e.grad_x, fx, 1e-6) <= 1e-5);
            CHECK(oracle::max_relative_error(e.grad_y, fy, 1e-6) <= 1e-5);
        }
    }
}

TEST_CASE("curvature fallback approximates the Hessian-vector product") {
    const ProblemDefinition p = smooth_toy();
    const Vector x = Vector::Constant(1, 0.7);
    Vector y(2);
    y << 0.4, -0.3;
    const State xi = State::Constant(1, 0.0);
    Vector w(2);
    w << 1.0, 2.0;
    const CurvatureProduct c = sample_curvature(p, 0, x, y, xi, w);
    CHECK(c.yy[0] == doctest::Approx(w[0] * (1.0 - std::sin(y[0]) * x[0])).epsilon(1e-6));
    CHECK(c.yy[1] == doctest::Approx(w[1]).epsilon(1e-6));
    CHECK(c.xy[0] == doctest::Approx(-w.sum() + std::cos(y[0]) * w[0]).epsilon(1e-6));
}

TEST_CASE("step schedule defaults") {
    const StepSchedule s;
    const StepValues v0 = step_values(s, 0);
    CHECK(10.0 / std::pow(10.0, 0.9) == doctest::Approx(1.2589).epsilon(1e-4));
    CHECK(v0.rho == 1.0);
    CHECK(v0.gamma == 1.0);
    const StepValues v990 = step_values(s, 990);
    CHECK(v990.rho == doctest::Approx(10.0 / std::pow(1000.0, 0.9)));
    CHECK(v990.rho == doctest::Approx(0.01995).epsilon(1e-3));
    CHECK(v990.gamma == doctest::Approx(15.0 / 1005.0));
    StepValues prev = v0;
    for (int t = 1; t < 3000; ++t) {
        const StepValues cur = step_values(s, t);
        CHECK(cur.rho <= prev.rho);
        CHECK(cur.gamma <= prev.gamma);
        CHECK(cur.rho > 0.0);
        prev = cur;
    }
    auto ratio = [&](int t) { return step_values(s, t).gamma / step_values(s, t).rho; };
    CHECK(ratio(1000000) < ratio(10000));
    CHECK(ratio(2000000000) < ratio(1000000));
    CHECK(ratio(2000000000) < 0.2);
    CHECK_THROWS_AS((void)step_values(s, -1), InvalidInput);
}

TEST_CASE("kkt report of the scalar square at x = 1") {
    const ProblemDefinition p = square_toy();
    LongTermIterate it{Vector::Constant(1, 1.0), Vector(0), 0};
    std::vector<ShortTermResult> results{ShortTermResult{Vector(0), std::nullopt, {}}};
    std::vector<State> states{State(0)};
    const KktReport r = kkt_report(p, it, results, states, Vector(0));
    CHECK(r.stationarity_long == doctest::Approx(2.0));
    it.x[0] = 0.0;
    const KktReport opt = kkt_report(p, it, results, states, Vector(0));
    CHECK(opt.stationarity_long <= 1e-10);
    CHECK(opt.stationarity_short <= 1e-10);
    CHECK(opt.slackness_long <= 1e-10);
}

TEST_CASE("kkt report requires multipliers and consistent batches") {
    const ProblemDefinition p = smooth_toy();
    const LongTermIterate it{Vector::Constant(1, 0.5), Vector::Constant(1, 0.2), 0};
    std::vector<ShortTermResult> results{ShortTermResult{Vector::Zero(2), std::nullopt, {}}};
    std::vector<State> states{State::Zero(1)};
    CHECK_THROWS_AS((void)kkt_report(p, it, results, states, Vector::Zero(1)), InvalidInput);
    results[0].nu = Vector::Zero(1);
    CHECK_NOTHROW((void)kkt_report(p, it, results, states, Vector::Zero(1)));
    std::vector<State> two{State::Zero(1), State::Zero(1)};
    CHECK_THROWS_AS((void)kkt_report(p, it, results, two, Vector::Zero(1)), InvalidInput);
    CHECK_THROWS_AS((void)kkt_report(p, it, {}, {}, Vector::Zero(1)), InvalidInput);
}

TEST_CASE("projected feasible point with analytic slackness has zero slackness residual") {
    const ProblemDefinition p = smooth_toy();
    // y on the circle |y| = 2 with an exactly complementary multiplier.
    Vector y(2);
    y << 2.0 / std::sqrt(2.0), -2.0 / std::sqrt(2.0);
    const LongTermIterate it{Vector::Constant(1, 0.0), Vector::Constant(1, 0.0), 0};
    std::vector<ShortTermResult> results{ShortTermResult{y, Vector::Constant(1, 0.5), {}}};
    std::vector<State> states{State::Zero(1)};
    const KktReport r = kkt_report(p, it, results, states, Vector::Constant(1, -1.0));
    CHECK(r.slackness_short <= 1e-12);
    CHECK(r.slackness_long <= 1e-12);
    CHECK(r.feasibility_short <= 1e-12);
    CHECK(r.feasibility_long[0] == -1.0);
    // Interior optimum of g_0 = 0.5 |y|^2 (x = 0) is y = 0 with nu = 0: all residuals vanish.
    results[0] = ShortTermResult{Vector::Zero(2), Vector::Zero(1), {}};
    const KktReport z = kkt_report(p, it, results, states, Vector::Constant(1, -1.0));
    CHECK(z.stationarity_short <= 1e-12);
}
