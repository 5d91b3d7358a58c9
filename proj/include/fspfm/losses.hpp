#pragma once

#include <span>
#include <string>

#include "fspfm/param_store.hpp"
#include "fspfm/tape.hpp"

namespace fspfm {

/// Additive angular margin softmax head. The class-weight matrix lives in a
/// ParamStore under `weight_name` with shape [num_classes, d]; rows are
/// L2-normalized inside the loss.
struct ArcFaceHead {
    std::string weight_name = "head.W";
    double scale = 16.0;
    double margin = 0.3;

    void validate() const;
};

/// Mean over the batch of −log softmax(logits)_y, where the target logit is
/// s·cos(θ_y + m) and the others s·cos θ_j. When θ_y + m would pass π the
/// target falls back to s·(cos θ_y − m·sin m), which keeps it monotone in θ_y.
///
/// `features` is [B,d] (or a single [d] vector with one label).
Var arcface_loss(ParamStore& store, const ArcFaceHead& head, Var features,
                 std::span<const int> labels);

/// Same loss with the class weights supplied as a Var.
Var arcface_loss(Var class_weights, double scale, double margin, Var features,
                 std::span<const int> labels);

/// The target-class logit before scaling, i.e. cos(θ+m) or its fallback.
double arcface_target_cosine(double cos_theta, double margin);

/// (1/N)·Σ‖u_i − v_i‖². Rows of [N,d] batches, or a single pair of vectors.
Var ada_loss(Var u, Var v);

/// l_arc + λ·l_ada.
Var total_loss(Var l_arc, Var l_ada, double lambda);
double total_loss(double l_arc, double l_ada, double lambda);

}  // namespace fspfm
