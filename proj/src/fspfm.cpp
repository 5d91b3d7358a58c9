#include "fspfm/fspfm.hpp"

#include <cmath>
#include <random>

#include "fspfm/error.hpp"
#include "fspfm/ops.hpp"
#include "fspfm/synth.hpp"

namespace fspfm {

namespace {

std::string join(std::string_view prefix, std::string_view leaf) {
    std::string out(prefix);
    out += '.';
    out += leaf;
    return out;
}

}  // namespace

void add_uniform_affine(ParamStore& store, const std::string& name, std::size_t in,
                        std::size_t out, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Tensor w({out, in});
    for (auto& v : w.data()) v = uniform(rng);
    Tensor b({out});
    for (auto& v : b.data()) v = uniform(rng);
    store.add(name + ".W", std::move(w));
    store.add(name + ".b", std::move(b));
}

void add_zero_affine(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                     double bias) {
    store.add(name + ".W", Tensor({out, in}));
    store.add(name + ".b", Tensor({out}, bias));
}

void init_fspfm(ParamStore& store, std::string_view prefix, FspfmDims dims, std::uint64_t seed) {
    if (dims.feature_dim == 0 || dims.pose_dim == 0) {
        fail(ErrorClass::config, "fspfm dimensions must be positive");
    }
    const std::size_t d = dims.feature_dim;
    const std::size_t p = dims.pose_dim;
    std::uint64_t layer = 0;
    for (const char* block : {"T1", "T2"}) {
        const std::string base = join(prefix, block);
        add_uniform_affine(store, base + ".l1", d, d, derive_seed(seed, 100, layer++));
        add_zero_affine(store, base + ".l2", d, d);
    }
    for (const char* gate : {"P1", "P2"}) {
        const std::string base = join(prefix, gate);
        add_uniform_affine(store, base + ".l1", p, d, derive_seed(seed, 100, layer++));
        add_uniform_affine(store, base + ".l2", d, d, derive_seed(seed, 100, layer++));
    }
}

ParamStore init_fspfm(FspfmDims dims, std::uint64_t seed) {
    ParamStore store;
    init_fspfm(store, "fspfm", dims, seed);
    return store;
}

Var pose_gate(ParamStore& store, std::string_view gate, Var theta) {
    Var hidden = relu(affine(store, join(gate, "l1"), theta));
    return sigmoid(affine(store, join(gate, "l2"), hidden));
}

Var residual_block(ParamStore& store, std::string_view block, Var f) {
    Var hidden = relu(affine(store, join(block, "l1"), f));
    return affine(store, join(block, "l2"), hidden);
}

Var frontalize(ParamStore& store, std::string_view prefix, Var f, Var theta) {
    if (f.value().rank() != theta.value().rank() ||
        (f.value().rank() == 2 && f.value().dim(0) != theta.value().dim(0))) {
        fail(ErrorClass::shape, "frontalize: feature batch " + shape_string(f.shape()) +
                                    " does not match pose batch " + shape_string(theta.shape()));
    }
    Var r1 = hadamard(residual_block(store, join(prefix, "T1"), f),
                      pose_gate(store, join(prefix, "P1"), theta));
    Var r2 = hadamard(residual_block(store, join(prefix, "T2"), f),
                      pose_gate(store, join(prefix, "P2"), theta));
    return add(add(f, r1), r2);
}

void init_attention(ParamStore& store, std::string_view prefix, std::size_t feature_dim,
                    std::uint64_t seed, double output_bias) {
    if (feature_dim == 0) fail(ErrorClass::config, "attention dimension must be positive");
    add_uniform_affine(store, join(prefix, "l1"), feature_dim, feature_dim, derive_seed(seed, 200));
    add_zero_affine(store, join(prefix, "l2"), feature_dim, feature_dim, output_bias);
}

Var attention_weights(ParamStore& store, std::string_view prefix, Var f) {
    Var hidden = relu(affine(store, join(prefix, "l1"), f));
    return sigmoid(affine(store, join(prefix, "l2"), hidden));
}

}  // namespace fspfm
