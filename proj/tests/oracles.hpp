#pragma once

#include "pdd/core.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace oracle {

using pdd::Vector;

/// Central differences with step 1e-6 (1 + |z_k|).
inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& z,
                               double rel_step = 1e-6) {
    Vector g(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        const double h = rel_step * (1.0 + std::abs(z[k]));
        Vector p = z;
        Vector q = z;
        p[k] += h;
        q[k] -= h;
        g[k] = (f(p) - f(q)) / (2.0 * h);
    }
    return g;
}

/// Richardson-extrapolated central difference of a vector map along a direction.
inline Vector directional(const std::function<Vector(const Vector&)>& f, const Vector& z, const Vector& dir,
                          double h = 1e-3) {
    auto cd = [&](double s) { return Vector((f(z + s * dir) - f(z - s * dir)) / (2.0 * s)); };
    const Vector d1 = cd(h);
    const Vector d2 = cd(h / 2.0);
    const Vector d4 = cd(h / 4.0);
    const Vector r1 = (4.0 * d2 - d1) / 3.0;
    const Vector r2 = (4.0 * d4 - d2) / 3.0;
    return (16.0 * r2 - r1) / 15.0;
}

/// Relative error with absolute comparison where the reference magnitude is below `floor`.
inline double max_relative_error(const Vector& got, const Vector& want, double floor = 1e-8) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < want.size(); ++k) {
        const double diff = std::abs(got[k] - want[k]);
        const double scale = std::abs(want[k]);
        worst = std::max(worst, scale < floor ? diff : diff / scale);
    }
    return worst;
}

struct GridResult {
    Vector argmin;
    double value = std::numeric_limits<double>::infinity();
};

/// Exhaustive 2-D grid search over [lo0, hi0] x [lo1, hi1].
inline GridResult grid_search_2d(const std::function<double(double, double)>& f, double lo0, double hi0, double lo1,
                                 double hi1, double step) {
    GridResult best;
    const int n0 = static_cast<int>(std::lround((hi0 - lo0) / step));
    const int n1 = static_cast<int>(std::lround((hi1 - lo1) / step));
    for (int a = 0; a <= n0; ++a) {
        for (int b = 0; b <= n1; ++b) {
            const double u = lo0 + a * step;
            const double v = lo1 + b * step;
            const double val = f(u, v);
            if (val < best.value) {
                best.value = val;
                best.argmin = Vector(2);
                best.argmin << u, v;
            }
        }
    }
    return best;
}

/// Golden-section minimization of a unimodal scalar function.
inline double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    while (b - a > tol) {
        if (f(c) < f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    return 0.5 * (a + b);
}

}  // namespace oracle
