#pragma once

#include "pdd/core.hpp"
#include "pdd/shortterm.hpp"

#include <vector>

namespace pdd::thp {

/// Two-timescale hybrid precoding: long-term RF phases theta (M x S) and multipliers lambda (K);
/// short-term digital precoder G (S x K) from unrolled WMMSE.
struct Instance {
    WmmseDims dims{16, 2, 2};
    int J = 5;
    Vector gamma;   // per-user rate targets in nats; empty means all 1
    int paths = 3;

    void validate() const;
    [[nodiscard]] Vector targets() const;
};

/// Half-wavelength ULA steering vector a_m = exp(j pi m sin(phi)).
[[nodiscard]] ComplexVector steering(int M, double phi);

/// Geometric channel h_k = (1 / sqrt(L)) sum_l alpha_l a(phi_l); returned stacked with rows h_k^H.
[[nodiscard]] State sample(const Instance& inst, Rng& rng);

/// g_0 = |F G|^2, g_k = gamma_k - r_k.
[[nodiscard]] ProblemDefinition problem(const Instance& inst);

[[nodiscard]] SolverPtr solver(const Instance& inst);

/// theta uniform in [0, 2 pi), lambda = 1.
[[nodiscard]] LongTermIterate initial(const Instance& inst, Rng& rng);

/// Sample-average per-user rates and transmit power of the unrolled policy at (theta, lambda).
struct PolicyValue {
    Vector rates;
    double power = 0.0;
};

[[nodiscard]] PolicyValue evaluate_policy(const Instance& inst, const Vector& theta, const Vector& lambda,
                                          const std::vector<State>& samples);

}  // namespace pdd::thp
