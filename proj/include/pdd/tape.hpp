#pragma once

#include "pdd/shortterm.hpp"

#include <any>
#include <string>
#include <vector>

namespace pdd {

/// Recorded forward pass of one short-term solve: y^0 ... y^J with per-layer caches.
struct UnrollTape {
    SolverPtr solver;
    LayerContext context;
    std::vector<Vector> layer_states;
    std::vector<std::any> caches;          // caches[j - 1] belongs to layer j
    std::vector<std::string> layer_kind;   // "init" followed by one entry per layer

    [[nodiscard]] int layers() const { return static_cast<int>(layer_states.size()) - 1; }
};

}  // namespace pdd
