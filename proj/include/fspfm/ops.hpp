#pragma once

#include <string_view>

#include "fspfm/param_store.hpp"
#include "fspfm/tape.hpp"

namespace fspfm {

enum class Activation { relu, sigmoid };

/// W·x + b with W = `name`.W [m,n] and b = `name`.b [m]. `x` is either a
/// vector [n] or a batch [B,n]; the result is [m] or [B,m] respectively.
Var affine(ParamStore& store, std::string_view name, Var x);

Var relu(Var x);
Var sigmoid(Var x);
Var activation(Activation kind, Var x);

Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);

/// Sum of all elements, as a [1] tensor.
Var sum(Var a);

/// (1/N)·Σ_i ‖a_i − b_i‖² over the rows of two [N,d] batches (or one pair of
/// vectors, N = 1). Composed from sub/hadamard/sum/scale.
Var mean_row_sq_distance(Var a, Var b);

/// Scalar projection Σ r⊙a against a constant tensor, used to turn vector
/// outputs into losses for gradient checks.
Var project(Var a, const Tensor& weights);

/// sigmoid(x) = 1/(1+exp(-x)) evaluated without overflow for large |x|.
double stable_sigmoid(double x);

}  // namespace fspfm
