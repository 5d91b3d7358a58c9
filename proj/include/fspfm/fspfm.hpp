#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "fspfm/param_store.hpp"
#include "fspfm/tape.hpp"

namespace fspfm {

/// Parameter layout of the frontalization module under `prefix`:
///
///   <prefix>.T1.l1, <prefix>.T1.l2   residual block d→d→d (relu hidden)
///   <prefix>.T2.l1, <prefix>.T2.l2
///   <prefix>.P1.l1, <prefix>.P1.l2   pose gate p→d→d (relu hidden, sigmoid out)
///   <prefix>.P2.l1, <prefix>.P2.l2
///
/// Each `lN` names an affine layer with `.W` and `.b` entries.
struct FspfmDims {
    std::size_t feature_dim = 64;
    std::size_t pose_dim = 16;
};

/// Adds freshly initialized FSPFM parameters to `store`. Hidden layers draw
/// weights and biases from U(−1/√fan_in, 1/√fan_in); the output layers of both
/// residual blocks are zero, so the module starts as the identity map.
void init_fspfm(ParamStore& store, std::string_view prefix, FspfmDims dims, std::uint64_t seed);
ParamStore init_fspfm(FspfmDims dims, std::uint64_t seed);

/// P_i(θ) ∈ (0,1)^d. `gate` is the full prefix, e.g. "fspfm.P1".
Var pose_gate(ParamStore& store, std::string_view gate, Var theta);

/// T_i(f). `block` is the full prefix, e.g. "fspfm.T1".
Var residual_block(ParamStore& store, std::string_view block, Var f);

/// f + T1(f)⊙P1(θ) + T2(f)⊙P2(θ). Accepts single vectors or row batches.
Var frontalize(ParamStore& store, std::string_view prefix, Var f, Var theta);

/// Attention layer d→d→d (relu hidden, sigmoid out). The hidden layer uses
/// the same uniform init; the output layer has zero weights and a constant
/// bias `output_bias`, so the initial weights are sigmoid(output_bias).
void init_attention(ParamStore& store, std::string_view prefix, std::size_t feature_dim,
                    std::uint64_t seed, double output_bias = 0.0);

/// AM(f) ∈ (0,1)^d.
Var attention_weights(ParamStore& store, std::string_view prefix, Var f);

/// Adds an affine layer `<name>.W` [out,in], `<name>.b` [out] with U(±1/√in) entries.
void add_uniform_affine(ParamStore& store, const std::string& name, std::size_t in,
                        std::size_t out, std::uint64_t seed);
void add_zero_affine(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                     double bias = 0.0);

}  // namespace fspfm
