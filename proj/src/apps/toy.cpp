#include "pdd/apps/toy.hpp"

#include <algorithm>
#include <cmath>

namespace pdd::toy {

void Instance::validate() const {
    if (dim < 1) throw InvalidInput("toy: dim must be >= 1");
    if (!(noise >= 0.0)) throw InvalidInput("toy: noise must be nonnegative");
    if (!(box > 0.0)) throw InvalidInput("toy: box must be positive");
}

ProblemDefinition problem(const Instance& inst) {
    inst.validate();
    const Vector c = Vector::Constant(inst.dim, inst.target);
    ProblemDefinition p;
    p.n_x = inst.dim;
    p.n_y = inst.dim;
    p.domain_x = Box::uniform(inst.dim, -inst.box, inst.box);
    const double ybound = 2.0 * inst.box + std::abs(inst.mean) + 20.0 * inst.noise + 1.0;
    p.domain_y = Box::uniform(inst.dim, -ybound, ybound);
    p.sample_fn = [c](int, const Vector& x, const Vector& y, const State&) {
        return SampleEval{y.squaredNorm() + (x - c).squaredNorm(), 2.0 * (x - c), 2.0 * y};
    };
    p.sample_curvature = [](int, const Vector&, const Vector&, const State&, const Vector& w) {
        return CurvatureProduct{2.0 * w, Vector::Zero(w.size())};
    };
    p.sampler = [inst](Rng& rng) {
        std::normal_distribution<double> n(inst.mean, inst.noise);
        State s(inst.dim);
        for (int k = 0; k < inst.dim; ++k) s[k] = inst.noise > 0.0 ? n(rng) : inst.mean;
        return s;
    };
    return p;
}

SolverPtr solver(const Instance& inst) {
    inst.validate();
    ClosedFormMap map;
    map.forward = [](const LayerContext& ctx) { return LayerOutput{ctx.x - ctx.xi, {}, false}; };
    map.vjp = [](const LayerContext&, const Vector&, const std::any&, const Vector& bar_y) {
        return LayerAdjoint{Vector::Zero(bar_y.size()), bar_y, Vector(0)};
    };
    return std::make_shared<ClosedForm>("toy", inst.dim, 0, inst.dim, map);
}

Vector optimum(const Instance& inst) {
    const Vector x = Vector::Constant(inst.dim, 0.5 * (inst.mean + inst.target));
    return x.cwiseMax(-inst.box).cwiseMin(inst.box);
}

}  // namespace pdd::toy
