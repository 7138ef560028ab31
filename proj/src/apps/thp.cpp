#include "pdd/apps/thp.hpp"

#include <cmath>
#include <numbers>

namespace pdd::thp {

void Instance::validate() const {
    const auto [M, S, K] = dims;
    if (K < 1 || !(K <= S && S < M)) throw InvalidInput("thp: dimensions must satisfy 1 <= K <= S < M");
    if (J < 0) throw InvalidInput("thp: J must be >= 0");
    if (paths < 1) throw InvalidInput("thp: paths must be >= 1");
    if (gamma.size() != 0 && gamma.size() != K) throw InvalidInput("thp: gamma needs K entries");
    if (gamma.size() != 0 && !(gamma.array() > 0.0).all()) throw InvalidInput("thp: rate targets must be positive");
}

Vector Instance::targets() const { return gamma.size() == 0 ? Vector::Ones(dims.K) : gamma; }

ComplexVector steering(int M, double phi) {
    ComplexVector a(M);
    for (int m = 0; m < M; ++m) a[m] = std::polar(1.0, std::numbers::pi * m * std::sin(phi));
    return a;
}

State sample(const Instance& inst, Rng& rng) {
    const auto [M, S, K] = inst.dims;
    std::uniform_real_distribution<double> angle(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
    std::normal_distribution<double> gain(0.0, std::sqrt(0.5));
    ComplexMatrix H(K, M);
    const double norm = 1.0 / std::sqrt(static_cast<double>(inst.paths));
    for (int k = 0; k < K; ++k) {
        ComplexVector h = ComplexVector::Zero(M);
        for (int l = 0; l < inst.paths; ++l) {
            const std::complex<double> alpha(gain(rng), gain(rng));
            h += alpha * steering(M, angle(rng));
        }
        H.row(k) = norm * h.adjoint();
    }
    return stack_complex(H);
}

ProblemDefinition problem(const Instance& inst) {
    inst.validate();
    const WmmseDims dims = inst.dims;
    const Vector gamma = inst.targets();
    ProblemDefinition p;
    p.n_x = dims.M * dims.S;
    p.n_y = 2 * dims.S * dims.K;
    p.m = dims.K;
    p.domain_x = Box::uniform(p.n_x, -2.0 * std::numbers::pi, 4.0 * std::numbers::pi);
    p.domain_y = Box::uniform(p.n_y, -1e3, 1e3);
    p.sample_fn = [dims, gamma](int i, const Vector& x, const Vector& y, const State& xi) {
        const ComplexMatrix F = rf_precoder(x, dims.M, dims.S);
        const ComplexMatrix G = unstack_complex(y, dims.S, dims.K);
        SampleEval e;
        if (i == 0) {
            const ComplexMatrix P = F * G;
            e.value = P.squaredNorm();
            e.grad_y = stack_complex(2.0 * F.adjoint() * P);
            e.grad_x = rf_precoder_adjoint(F, 2.0 * P * G.adjoint());
            return e;
        }
        const ComplexMatrix H = unstack_complex(xi, dims.K, dims.M);
        const ComplexMatrix E = H * F;
        const ComplexMatrix T = E * G;
        const int k = i - 1;
        const double tot = T.row(k).squaredNorm() + 1.0;
        const double interference = tot - std::norm(T(k, k));
        e.value = gamma[k] - std::log(tot / interference);
        ComplexMatrix Tbar = ComplexMatrix::Zero(dims.K, dims.K);
        for (int j = 0; j < dims.K; ++j) {
            Tbar(k, j) = -2.0 * T(k, j) * (1.0 / tot - (j == k ? 0.0 : 1.0 / interference));
        }
        e.grad_y = stack_complex(E.adjoint() * Tbar);
        e.grad_x = rf_precoder_adjoint(F, H.adjoint() * Tbar * G.adjoint());
        return e;
    };
    p.sampler = [inst](Rng& rng) { return sample(inst, rng); };
    return p;
}

SolverPtr solver(const Instance& inst) {
    inst.validate();
    return std::make_shared<Wmmse>(inst.dims, inst.J);
}

LongTermIterate initial(const Instance& inst, Rng& rng) {
    inst.validate();
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    Vector theta(inst.dims.M * inst.dims.S);
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = u(rng);
    return LongTermIterate{theta, Vector::Ones(inst.dims.K), 0};
}

PolicyValue evaluate_policy(const Instance& inst, const Vector& theta, const Vector& lambda,
                            const std::vector<State>& samples) {
    if (samples.empty()) throw InvalidInput("thp: empty sample set");
    const auto [M, S, K] = inst.dims;
    const ProblemDefinition p = problem(inst);
    const SolverPtr s = solver(inst);
    const ComplexMatrix F = rf_precoder(theta, M, S);
    PolicyValue v;
    v.rates = Vector::Zero(K);
    for (const State& xi : samples) {
        const ShortTermResult r = run_short_term(p, s, theta, lambda, xi).first;
        const ComplexMatrix G = unstack_complex(r.y, S, K);
        v.rates += user_rates(G, F, unstack_complex(xi, K, M));
        v.power += (F * G).squaredNorm();
    }
    v.rates /= static_cast<double>(samples.size());
    v.power /= static_cast<double>(samples.size());
    return v;
}

}  // namespace pdd::thp
