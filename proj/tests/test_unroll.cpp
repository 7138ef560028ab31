#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "pdd/unroll.hpp"
#include "test_problems.hpp"

#include <cmath>

using namespace pdd;

namespace {

struct Split {
    Vector y_prev;
    Vector x;
    Vector lambda;
};

Split split(const Vector& z, Eigen::Index ny, Eigen::Index nx, Eigen::Index nl) {
    return {z.head(ny), z.segment(ny, nx), z.tail(nl)};
}

Vector join(const Vector& a, const Vector& b, const Vector& c) {
    Vector z(a.size() + b.size() + c.size());
    z << a, b, c;
    return z;
}

/// <v, J u> against <J^T v, u> for one layer map at a random point.
double layer_dot_gap(const ShortTermSolver& solver, int j, const LayerContext& ctx, const Vector& y_prev, Rng& rng,
                     double h) {
    const Eigen::Index ny = solver.n_y();
    const Eigen::Index nx = solver.n_x();
    const Eigen::Index nl = solver.n_lambda();
    const Vector z = join(y_prev, ctx.x, ctx.lambda);
    const Vector u = fixtures::random_vector(rng, z.size(), -1.0, 1.0);
    const Vector v = fixtures::random_vector(rng, ny, -1.0, 1.0);
    auto map = [&](const Vector& zz) {
        const Split s = split(zz, ny, nx, nl);
        return solver.layer(j, LayerContext{s.x, s.lambda, ctx.xi}, s.y_prev).y;
    };
    const Vector ju = oracle::directional(map, z, u, h);
    const LayerOutput out = solver.layer(j, ctx, y_prev);
    const LayerAdjoint adj = solver.layer_vjp(j, ctx, y_prev, out.y, out.cache, v);
    const double lhs = v.dot(ju);
    const double rhs = join(adj.y_prev, adj.x, adj.lambda).dot(u);
    return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

}  // namespace

TEST_CASE("vjp of a single linear layer") {
    // y = c x with c = 3.
    ClosedFormMap map;
    map.forward = [](const LayerContext& ctx) { return LayerOutput{3.0 * ctx.x, {}, false}; };
    map.vjp = [](const LayerContext& ctx, const Vector&, const std::any&, const Vector& bar_y) {
        return LayerAdjoint{Vector::Zero(bar_y.size()), 3.0 * bar_y, Vector::Zero(ctx.lambda.size())};
    };
    auto solver = std::make_shared<ClosedForm>("linear", 2, 0, 2, map);
    ProblemDefinition q;
    q.n_x = 2;
    q.n_y = 2;
    q.domain_x = Box::uniform(2, -1.0, 1.0);
    q.domain_y = Box::uniform(2, -10.0, 10.0);
    q.sample_fn = [](int, const Vector&, const Vector& y, const State&) {
        return SampleEval{0.5 * y.squaredNorm(), Vector::Zero(2), y};
    };
    q.sampler = [](Rng&) { return State(0); };
    const auto [res, tape] = run_short_term(q, solver, Vector::Constant(2, 0.5), Vector(0), State(0));
    const TapeAdjoint adj = vjp(tape, Vector::Constant(2, 1.0));
    CHECK(adj.x[0] == 3.0);
    CHECK(adj.x[1] == 3.0);
    CHECK(res.y[0] == 1.5);
}

TEST_CASE("zero layers with a lambda-independent initializer have a zero lambda adjoint") {
    const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::none);
    GradientProjectionOptions o;
    o.J = 0;
    auto solver = std::make_shared<GradientProjection>(p, o);
    const auto [res, tape] = run_short_term(p, solver, Vector::Ones(2), Vector::Ones(1), State::Zero(3));
    const TapeAdjoint adj = vjp(tape, Vector::Ones(3));
    CHECK(adj.lambda.isZero(0.0));
    CHECK(adj.x.isZero(0.0));
}

TEST_CASE("dot-product test of every layer kind") {
    Rng rng(42);
    SUBCASE("gradient projection on a box") {
        const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::none);
        GradientProjectionOptions o;
        o.alpha0 = 0.7;
        const GradientProjection gp(p, o);
        for (int trial = 0; trial < 50; ++trial) {
            const LayerContext ctx{fixtures::random_vector(rng, 2, -1.0, 1.0),
                                   fixtures::random_vector(rng, 1, 0.0, 2.0), p.sampler(rng)};
            const Vector y = fixtures::random_vector(rng, 3, -2.5, 2.5).cwiseMax(-2.0).cwiseMin(2.0);
            CHECK(layer_dot_gap(gp, 1 + trial % 5, ctx, y, rng, 1e-5) <= 1e-8);
        }
    }
    SUBCASE("gradient projection with a curved short-term constraint") {
        const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::ball);
        GradientProjectionOptions o;
        o.alpha0 = 0.7;
        const GradientProjection gp(p, o);
        for (int trial = 0; trial < 50; ++trial) {
            const LayerContext ctx{fixtures::random_vector(rng, 2, -1.0, 1.0),
                                   fixtures::random_vector(rng, 1, 0.0, 2.0), p.sampler(rng)};
            const Vector y = fixtures::random_vector(rng, 3, -0.6, 0.6);
            CHECK(layer_dot_gap(gp, 1 + trial % 5, ctx, y, rng, 1e-5) <= 1e-8);
        }
    }
    SUBCASE("gradient projection with trainable steps") {
        const ProblemDefinition base = fixtures::coupled(fixtures::ShortKind::linear);
        const ProblemDefinition p = augment_with_steps(base, 3, 0.05, 1.0);
        GradientProjectionOptions o;
        o.J = 3;
        o.trainable_steps = true;
        o.base_n_x = 2;
        const GradientProjection gp(p, o);
        for (int trial = 0; trial < 50; ++trial) {
            Vector x(p.n_x);
            x << fixtures::random_vector(rng, 2, -1.0, 1.0), fixtures::random_vector(rng, 9, 0.1, 0.9);
            const LayerContext ctx{x, fixtures::random_vector(rng, 1, 0.0, 2.0), p.sampler(rng)};
            const Vector y = fixtures::random_vector(rng, 3, -1.0, 0.3);
            CHECK(layer_dot_gap(gp, 1 + trial % 3, ctx, y, rng, 1e-5) <= 1e-8);
        }
    }
    SUBCASE("majorization-minimization without short-term constraints") {
        const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::none);
        const MajorizationMinimization mm(p, MajorizationOptions{5, 0.8, Vector()});
        for (int trial = 0; trial < 50; ++trial) {
            const LayerContext ctx{fixtures::random_vector(rng, 2, -1.0, 1.0),
                                   fixtures::random_vector(rng, 1, 0.0, 2.0), p.sampler(rng)};
            const Vector y = fixtures::random_vector(rng, 3, -2.0, 2.0);
            CHECK(layer_dot_gap(mm, 1, ctx, y, rng, 1e-5) <= 1e-8);
        }
    }
    SUBCASE("majorization-minimization with a curved short-term constraint") {
        const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::ball);
        const MajorizationMinimization mm(p, MajorizationOptions{5, 0.8, Vector::Constant(1, 0.5)});
        for (int trial = 0; trial < 50; ++trial) {
            const LayerContext ctx{fixtures::random_vector(rng, 2, -1.0, 1.0),
                                   fixtures::random_vector(rng, 1, 0.0, 2.0), p.sampler(rng)};
            const Vector y = fixtures::random_vector(rng, 3, -0.5, 0.5);
            CHECK(layer_dot_gap(mm, 1, ctx, y, rng, 1e-5) <= 1e-8);
        }
    }
    SUBCASE("wmmse sweep and initializer") {
        const WmmseDims dims{8, 2, 2};
        const Wmmse w(dims, 5);
        for (int trial = 0; trial < 50; ++trial) {
            const LayerContext ctx{fixtures::random_vector(rng, 16, 0.0, 6.28),
                                   fixtures::random_vector(rng, 2, 0.2, 3.0),
                                   fixtures::random_channel(rng, dims.K, dims.M)};
            const Vector y = fixtures::random_vector(rng, 8, -1.0, 1.0);
            CHECK(layer_dot_gap(w, 1 + trial % 5, ctx, y, rng, 1e-4) <= 1e-8);

            const Vector u = fixtures::random_vector(rng, 18, -1.0, 1.0);
            const Vector v = fixtures::random_vector(rng, 8, -1.0, 1.0);
            auto init = [&](const Vector& z) {
                return w.initial(LayerContext{z.head(16), z.tail(2), ctx.xi});
            };
            const Vector ju = oracle::directional(init, join(ctx.x, ctx.lambda, Vector(0)), u, 1e-4);
            const LayerAdjoint adj = w.initial_vjp(ctx, v);
            const double lhs = v.dot(ju);
            const double rhs = join(adj.x, adj.lambda, Vector(0)).dot(u);
            CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) <= 1e-8);
        }
    }
}

TEST_CASE("through-gradient of a y-independent function is the partial derivative") {
    ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::none);
    // Replace g_1 by 0.5 |x|^2.
    const auto base = p.sample_fn;
    p.sample_fn = [base](int i, const Vector& x, const Vector& y, const State& xi) {
        if (i == 0) return base(0, x, y, xi);
        return SampleEval{0.5 * x.squaredNorm(), x, Vector::Zero(3)};
    };
    GradientProjectionOptions o;
    o.alpha0 = 0.5;
    auto solver = std::make_shared<GradientProjection>(p, o);
    const Vector x = Vector::Constant(2, 0.3);
    const auto [res, tape] = run_short_term(p, solver, x, Vector::Ones(1), State::Ones(3));
    const ThroughGradient g = grad_through(p, 1, res, tape);
    CHECK(g.total_x() == x);
    CHECK(g.pushed_x.isZero(0.0));
}

TEST_CASE("finite-difference oracle on an analytic layer") {
    // y = x^2 componentwise; g_0 = sum(y) so the total derivative is 2 x.
    ClosedFormMap map;
    map.forward = [](const LayerContext& ctx) { return LayerOutput{ctx.x.cwiseAbs2(), {}, false}; };
    map.vjp = [](const LayerContext& ctx, const Vector&, const std::any&, const Vector& bar_y) {
        return LayerAdjoint{Vector::Zero(bar_y.size()), Vector(2.0 * ctx.x.cwiseProduct(bar_y)), Vector(0)};
    };
    ProblemDefinition p;
    p.n_x = 2;
    p.n_y = 2;
    p.domain_x = Box::uniform(2, -5.0, 5.0);
    p.domain_y = Box::uniform(2, 0.0, 100.0);
    p.sample_fn = [](int, const Vector&, const Vector& y, const State&) {
        return SampleEval{y.sum(), Vector::Zero(2), Vector::Ones(2)};
    };
    p.sampler = [](Rng&) { return State(0); };
    auto solver = std::make_shared<ClosedForm>("square", 2, 0, 2, map);
    Vector x(2);
    x << 0.7, -1.3;
    const FiniteDifferenceGradient fd = fd_oracle(p, 0, solver, x, Vector(0), State(0));
    CHECK(oracle::max_relative_error(fd.x, 2.0 * x) <= 1e-8);
    const auto [res, tape] = run_short_term(p, solver, x, Vector(0), State(0));
    CHECK(oracle::max_relative_error(grad_through(p, 0, res, tape).total_x(), 2.0 * x) <= 1e-14);

    ProblemDefinition zero = p;
    zero.sample_fn = [](int, const Vector&, const Vector&, const State&) {
        return SampleEval{0.0, Vector::Zero(2), Vector::Zero(2)};
    };
    const FiniteDifferenceGradient fz = fd_oracle(zero, 0, solver, x, Vector(0), State(0));
    CHECK(fz.x.isZero(0.0));
}

TEST_CASE("unrolled wmmse gradients agree with finite differences") {
    const WmmseDims dims{8, 2, 2};
    const ProblemDefinition p = fixtures::hybrid_precoding(dims);
    auto solver = std::make_shared<Wmmse>(dims, 5);
    double worst = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(static_cast<std::uint64_t>(1000 + seed));
        const Vector theta = fixtures::random_vector(rng, 16, 0.0, 6.28);
        const Vector lambda = fixtures::random_vector(rng, 2, 0.5, 2.0);
        const State xi = p.sampler(rng);
        const auto [res, tape] = run_short_term(p, solver, theta, lambda, xi);
        for (int i = 0; i <= p.m; ++i) {
            const ThroughGradient g = grad_through(p, i, res, tape);
            const FiniteDifferenceGradient fd = fd_oracle(p, i, solver, theta, lambda, xi);
            worst = std::max(worst, oracle::max_relative_error(g.total_x(), fd.x));
            worst = std::max(worst, oracle::max_relative_error(g.lambda, fd.lambda));
        }
    }
    MESSAGE("worst relative error " << worst);
    CHECK(worst <= 1e-5);
}

TEST_CASE("unrolled gradient projection and mm gradients agree with finite differences") {
    Rng rng(8);
    const ProblemDefinition p = fixtures::coupled(fixtures::ShortKind::ball);
    GradientProjectionOptions go;
    go.alpha0 = 0.6;
    const SolverPtr solvers[] = {std::make_shared<GradientProjection>(p, go),
                                 std::make_shared<MajorizationMinimization>(p, MajorizationOptions{4, 0.8, Vector()})};
    for (const SolverPtr& s : solvers) {
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const Vector x = fixtures::random_vector(rng, 2, -1.0, 1.0);
            const Vector lambda = fixtures::random_vector(rng, 1, 0.1, 1.0);
            const State xi = p.sampler(rng);
            const auto [res, tape] = run_short_term(p, s, x, lambda, xi);
            for (int i = 0; i <= p.m; ++i) {
                const ThroughGradient g = grad_through(p, i, res, tape);
                const FiniteDifferenceGradient fd = fd_oracle(p, i, s, x, lambda, xi);
                worst = std::max(worst, oracle::max_relative_error(g.total_x(), fd.x, 1e-6));
                worst = std::max(worst, oracle::max_relative_error(g.lambda, fd.lambda, 1e-6));
            }
        }
        MESSAGE(s->kind() << " worst relative error " << worst);
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("replay reproduces the tape bitwise") {
    Rng rng(1);
    const WmmseDims dims{8, 2, 2};
    const ProblemDefinition p = fixtures::hybrid_precoding(dims);
    auto solver = std::make_shared<Wmmse>(dims, 5);
    const auto [res, tape] =
        run_short_term(p, solver, fixtures::random_vector(rng, 16, 0.0, 6.28), Vector::Ones(2), p.sampler(rng));
    CHECK(replay(tape));
    UnrollTape broken = tape;
    broken.layer_states[3][0] += 1e-300;
    broken.layer_states[3][0] = std::nextafter(broken.layer_states[3][0], 1e9);
    CHECK_FALSE(replay(broken));
}
