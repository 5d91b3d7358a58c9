#include "fspfm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "fspfm/error.hpp"
#include "linalg.hpp"
#include "fspfm/ops.hpp"

namespace fspfm {

void ArcFaceHead::validate() const {
    if (!(scale > 0.0)) fail(ErrorClass::config, "arcface scale must be positive");
    if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
        fail(ErrorClass::config, "arcface margin must lie in [0, pi/2)");
    }
}

double arcface_target_cosine(double cos_theta, double margin) {
    if (cos_theta > -std::cos(margin)) {
        const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
        return cos_theta * std::cos(margin) - sin_theta * std::sin(margin);
    }
    return cos_theta - margin * std::sin(margin);
}

namespace {

double target_slope(double cos_theta, double margin) {
    if (cos_theta > -std::cos(margin)) {
        const double sin_theta = std::max(std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta)), 1e-12);
        return std::cos(margin) + std::sin(margin) * cos_theta / sin_theta;
    }
    return 1.0;
}

}  // namespace

Var arcface_loss(ParamStore& store, const ArcFaceHead& head, Var features,
                 std::span<const int> labels) {
    head.validate();
    Var w = features.tape().param(store, head.weight_name);
    return arcface_loss(w, head.scale, head.margin, features, labels);
}

Var arcface_loss(Var class_weights, double scale, double margin, Var features,
                 std::span<const int> labels) {
    ArcFaceHead{"", scale, margin}.validate();
    if (&class_weights.tape() != &features.tape()) {
        fail(ErrorClass::contract, "arcface: weights and features on different tapes");
    }
    Tape& tape = features.tape();
    const Tensor& wv = class_weights.value();
    const Tensor& fv = features.value();
    if (wv.rank() != 2) fail(ErrorClass::shape, "arcface: class weights must be [C,d]");
    const std::size_t classes = wv.dim(0);
    const std::size_t d = wv.dim(1);
    if (fv.shape().back() != d || fv.rank() > 2) {
        fail(ErrorClass::shape, "arcface: features " + shape_string(fv.shape()) +
                                    " incompatible with class weights " + shape_string(wv.shape()));
    }
    const std::size_t batch = fv.rank() == 2 ? fv.dim(0) : 1;
    if (labels.size() != batch) {
        fail(ErrorClass::contract, "arcface: " + std::to_string(labels.size()) + " labels for " +
                                       std::to_string(batch) + " features");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            fail(ErrorClass::contract, "arcface: label " + std::to_string(y) + " outside [0," +
                                           std::to_string(classes) + ")");
        }
    }

    std::vector<double> w_norm(classes);
    Tensor w_hat(wv.shape());
    for (std::size_t j = 0; j < classes; ++j) {
        w_norm[j] = l2_norm(wv.row(j));
        if (w_norm[j] == 0.0) fail(ErrorClass::contract, "arcface: zero-norm class weight row");
        for (std::size_t k = 0; k < d; ++k) w_hat.at(j, k) = wv.at(j, k) / w_norm[j];
    }
    std::vector<double> f_norm(batch);
    Tensor f_hat({batch, d});
    for (std::size_t i = 0; i < batch; ++i) {
        f_norm[i] = l2_norm(fv.row(i));
        if (f_norm[i] == 0.0) fail(ErrorClass::contract, "arcface: zero-norm feature");
        for (std::size_t k = 0; k < d; ++k) f_hat.at(i, k) = fv.row(i)[k] / f_norm[i];
    }

    Tensor cosines({batch, classes});
    linalg::view(cosines.data().data(), batch, classes).noalias() =
        linalg::view(f_hat.data().data(), batch, d) * linalg::view(w_hat.data().data(), classes, d).transpose();
    Tensor probs({batch, classes});
    double total = 0.0;
    std::vector<double> logits(classes);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < classes; ++j) {
            const double c = cosines.at(i, j);
            logits[j] = scale * (j == y ? arcface_target_cosine(c, margin) : c);
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            probs.at(i, j) = std::exp(logits[j] - top);
            denom += probs.at(i, j);
        }
        for (std::size_t j = 0; j < classes; ++j) probs.at(i, j) /= denom;
        total += (top + std::log(denom)) - logits[y];
    }
    const double loss = total / static_cast<double>(batch);

    const std::size_t fi = features.id(), wi = class_weights.id();
    std::vector<int> label_copy(labels.begin(), labels.end());
    return tape.record(
        "arcface", Tensor::vector({loss}), {fi, wi},
        [fi, wi, batch, classes, d, scale, margin, labels = std::move(label_copy),
         w_hat = std::move(w_hat), f_hat = std::move(f_hat), w_norm = std::move(w_norm),
         f_norm = std::move(f_norm), cosines = std::move(cosines),
         probs = std::move(probs)](Tape& t, std::size_t self) {
            const double g = t.grad(self)[0] / static_cast<double>(batch);
            const bool need_f = t.requires_grad(fi);
            const bool need_w = t.requires_grad(wi);
            // dL/dcos for every (sample, class); the normalizations are then
            // differentiated in matrix form.
            linalg::Mat dc(batch, classes);
            for (std::size_t i = 0; i < batch; ++i) {
                const auto y = static_cast<std::size_t>(labels[i]);
                for (std::size_t j = 0; j < classes; ++j) {
                    const double dz = g * (probs.at(i, j) - (j == y ? 1.0 : 0.0));
                    dc(i, j) = scale * dz * (j == y ? target_slope(cosines.at(i, j), margin) : 1.0);
                }
            }
            const auto c = linalg::view(cosines.data().data(), batch, classes);
            const auto fh = linalg::view(f_hat.data().data(), batch, d);
            const auto wh = linalg::view(w_hat.data().data(), classes, d);
            const linalg::Mat dcc = dc.cwiseProduct(c);
            if (need_f) {
                linalg::Mat gf = dc * wh;
                gf -= dcc.rowwise().sum().asDiagonal() * fh;
                for (std::size_t i = 0; i < batch; ++i) gf.row(static_cast<Eigen::Index>(i)) /= f_norm[i];
                linalg::view(t.grad(fi).data().data(), batch, d) += gf;
            }
            if (need_w) {
                linalg::Mat gw = dc.transpose() * fh;
                gw -= dcc.colwise().sum().transpose().asDiagonal() * wh;
                for (std::size_t j = 0; j < classes; ++j) gw.row(static_cast<Eigen::Index>(j)) /= w_norm[j];
                linalg::view(t.grad(wi).data().data(), classes, d) += gw;
            }
        });
}

Var ada_loss(Var u, Var v) {
    if (u.shape() != v.shape()) {
        fail(ErrorClass::contract, "ada_loss: batch shapes differ " + shape_string(u.shape()) +
                                       " vs " + shape_string(v.shape()));
    }
    return mean_row_sq_distance(u, v);
}

Var total_loss(Var l_arc, Var l_ada, double lambda) {
    return add(l_arc, scale(l_ada, lambda));
}

double total_loss(double l_arc, double l_ada, double lambda) { return l_arc + lambda * l_ada; }

}  // namespace fspfm
