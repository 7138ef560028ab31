#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "pdd/convex.hpp"

#include <cmath>

using namespace pdd;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

SmoothFunction shifted_square(Vector center, double offset, Vector weights) {
    return {[=](const Vector& z, Vector* g, Matrix* h) {
        const Vector d = z - center;
        if (g) *g = 2.0 * weights.cwiseProduct(d);
        if (h) *h = (2.0 * weights).asDiagonal();
        return weights.dot(d.cwiseAbs2()) + offset;
    }};
}

}  // namespace

TEST_CASE("barrier: unconstrained minimizer inside a loose constraint") {
    ConvexProgram p;
    p.box = Box::uniform(1, -3.0, 3.0);
    p.objective = shifted_square(vec({1.0}), 0.0, vec({1.0}));
    p.constraints.push_back(shifted_square(vec({0.0}), -4.0, vec({1.0})));
    const BarrierSolution s = minimize_barrier(p, vec({0.0}));
    CHECK(s.z[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(s.multipliers[0] <= 1e-7);
}

TEST_CASE("barrier: active linear constraint") {
    ConvexProgram p;
    p.box = Box::uniform(1, -3.0, 3.0);
    p.objective = shifted_square(vec({1.0}), 0.0, vec({1.0}));
    p.constraints.push_back({[](const Vector& z, Vector* g, Matrix* h) {
        if (g) *g = Vector::Ones(1);
        if (h) *h = Matrix::Zero(1, 1);
        return z[0] - 0.5;
    }});
    const BarrierSolution s = minimize_barrier(p, vec({0.0}));
    CHECK(s.z[0] == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(s.multipliers[0] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("barrier: two-dimensional problem with an active quadratic constraint") {
    ConvexProgram p;
    p.box = Box(vec({-5.0, 0.0}), vec({5.0, 10.0}));
    p.objective = shifted_square(vec({0.0, 0.0}), 0.0, vec({1.0, 1.0}));
    p.constraints.push_back({[](const Vector& z, Vector* g, Matrix* h) {
        if (g) *g = vec({2.0 * (z[0] - 3.0), 1.0});
        if (h) {
            *h = Matrix::Zero(2, 2);
            (*h)(0, 0) = 2.0;
        }
        return (z[0] - 3.0) * (z[0] - 3.0) - 1.0 + z[1];
    }});
    const PhaseOneOutcome ph = phase_one(p, p.box.center());
    REQUIRE(ph.feasible);
    const BarrierSolution s = minimize_barrier(p, ph.solution.z);
    CHECK(s.z[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(s.z[1] == doctest::Approx(0.0).epsilon(1e-6));
    const auto grid = oracle::grid_search_2d(
        [](double x, double l) {
            return ((x - 3.0) * (x - 3.0) - 1.0 + l <= 0.0) ? x * x + l * l : 1e300;
        },
        -5.0, 5.0, 0.0, 10.0, 1e-3);
    CHECK(std::abs(grid.argmin[0] - s.z[0]) <= 2e-3);
    CHECK(std::abs(grid.argmin[1] - s.z[1]) <= 2e-3);
}

TEST_CASE("max constraint: symmetric pair") {
    std::vector<SmoothFunction> fs{shifted_square(vec({2.0}), 0.0, vec({1.0})),
                                   shifted_square(vec({-2.0}), 0.0, vec({1.0}))};
    const MaxConstraintSolution s = minimize_max_constraint(fs, Box::uniform(1, -3.0, 3.0), vec({1.0}));
    CHECK(s.z[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    CHECK(s.alpha == doctest::Approx(4.0).epsilon(1e-7));
    CHECK(s.weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("max constraint: single square") {
    std::vector<SmoothFunction> fs{shifted_square(vec({0.0}), 0.0, vec({1.0}))};
    const MaxConstraintSolution s = minimize_max_constraint(fs, Box::uniform(1, -3.0, 3.0), vec({2.0}));
    CHECK(std::abs(s.z[0]) <= 1e-4);
    CHECK(std::abs(s.alpha) <= 1e-7);
}

TEST_CASE("max constraint: crossing point") {
    std::vector<SmoothFunction> fs{shifted_square(vec({1.0}), -1.0, vec({1.0})),
                                   shifted_square(vec({0.0}), 0.0, vec({1.0}))};
    const MaxConstraintSolution s = minimize_max_constraint(fs, Box::uniform(1, -3.0, 3.0), vec({-2.0}));
    CHECK(std::abs(s.z[0]) <= 1e-4);
    CHECK(std::abs(s.alpha) <= 1e-7);
    double best = 1e300;
    double arg = 0.0;
    for (int k = 0; k <= 6000; ++k) {
        const double x = -3.0 + 1e-3 * k;
        const double v = std::max((x - 1) * (x - 1) - 1, x * x);
        if (v < best) {
            best = v;
            arg = x;
        }
    }
    CHECK(std::abs(arg - s.z[0]) <= 1e-3);
}

TEST_CASE("phase one detects an empty feasible set") {
    ConvexProgram p;
    p.box = Box::uniform(1, -3.0, 3.0);
    p.objective = shifted_square(vec({0.0}), 0.0, vec({1.0}));
    p.constraints.push_back(shifted_square(vec({2.0}), -1.0, vec({1.0})));
    p.constraints.push_back(shifted_square(vec({-2.0}), -1.0, vec({1.0})));
    const PhaseOneOutcome ph = phase_one(p, vec({0.0}));
    CHECK_FALSE(ph.feasible);
    CHECK(ph.solution.alpha == doctest::Approx(3.0).epsilon(1e-7));
}

TEST_CASE("barrier rejects infeasible starts and degenerate boxes") {
    ConvexProgram p;
    p.box = Box::uniform(1, -1.0, 1.0);
    p.objective = shifted_square(vec({0.0}), 0.0, vec({1.0}));
    CHECK_THROWS_AS((void)minimize_barrier(p, vec({2.0})), InvalidInput);
    p.box = Box(vec({0.0}), vec({0.0}));
    CHECK_THROWS_AS((void)minimize_barrier(p, vec({0.0})), InvalidInput);
}

TEST_CASE("quadratic helper") {
    const SmoothFunction q = quadratic_function(1.0, vec({1.0, -1.0}), Matrix::Identity(2, 2) * 2.0, vec({0.0, 0.0}));
    Vector g;
    Matrix h;
    CHECK(q(vec({1.0, 1.0}), &g, &h) == doctest::Approx(3.0));
    CHECK(g[0] == doctest::Approx(3.0));
    CHECK(h(1, 1) == 2.0);
}
