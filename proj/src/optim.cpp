#include "fspfm/optim.hpp"

#include <cmath>

#include "fspfm/error.hpp"

namespace fspfm {

SgdOptimizer::SgdOptimizer(double momentum) : momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        fail(ErrorClass::config, "momentum must lie in [0,1), got " + std::to_string(momentum));
    }
}

void SgdOptimizer::step(ParamStore& store, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        fail(ErrorClass::config, "learning rate must be positive, got " + std::to_string(lr));
    }
    for (auto& entry : store.entries()) {
        if (entry.frozen) continue;
        auto [it, inserted] = velocity_.try_emplace(entry.name, entry.value.shape());
        Tensor& v = it->second;
        auto vd = v.data();
        auto gd = entry.grad.data();
        auto pd = entry.value.data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            vd[i] = momentum_ * vd[i] + gd[i];
            pd[i] -= lr * vd[i];
        }
    }
    store.zero_grad();
}

void sgd_step(ParamStore& store, double lr) {
    SgdOptimizer plain(0.0);
    plain.step(store, lr);
}

}  // namespace fspfm
