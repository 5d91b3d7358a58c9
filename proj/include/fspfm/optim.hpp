#pragma once

#include <string>
#include <unordered_map>

#include "fspfm/param_store.hpp"

namespace fspfm {

/// Heavy-ball SGD: v ← μ·v + g, θ ← θ − lr·v. Velocity buffers are keyed by
/// parameter name and created on first use.
class SgdOptimizer {
public:
    explicit SgdOptimizer(double momentum = 0.0);

    /// Updates every non-frozen entry, then clears all gradient accumulators.
    void step(ParamStore& store, double lr);

    double momentum() const noexcept { return momentum_; }

private:
    double momentum_;
    std::unordered_map<std::string, Tensor> velocity_;
};

/// One-shot form of `SgdOptimizer::step` for callers that keep no velocity.
void sgd_step(ParamStore& store, double lr);

}  // namespace fspfm
