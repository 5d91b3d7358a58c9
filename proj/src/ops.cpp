#include "fspfm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fspfm/error.hpp"
#include "linalg.hpp"

namespace fspfm {

namespace {

Tape& common_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) fail(ErrorClass::contract, "operands recorded on different tapes");
    return a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
    if (a.shape() != b.shape()) {
        fail(ErrorClass::shape, std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
    }
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

constexpr double kSigmoidLow = std::numeric_limits<double>::min();
const double kSigmoidHigh = std::nextafter(1.0, 0.0);

}  // namespace

double stable_sigmoid(double x) {
    double s;
    if (x >= 0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    // Rounding would otherwise reach 0 or 1 exactly once |x| exceeds ~37.
    return std::clamp(s, kSigmoidLow, kSigmoidHigh);
}

Var affine(ParamStore& store, std::string_view name, Var x) {
    const std::string w_name = std::string(name) + ".W";
    const std::string b_name = std::string(name) + ".b";
    if (!store.contains(w_name) || !store.contains(b_name)) {
        fail(ErrorClass::config, "affine: missing parameter '" + std::string(name) + "'");
    }
    const Tensor& w_value = store.value(w_name);
    const Tensor& b_value = store.value(b_name);
    if (w_value.rank() != 2 || b_value.rank() != 1 || b_value.dim(0) != w_value.dim(0)) {
        fail(ErrorClass::shape, "affine '" + std::string(name) + "': inconsistent W " +
                                    shape_string(w_value.shape()) + " / b " +
                                    shape_string(b_value.shape()));
    }
    const std::size_t m = w_value.dim(0);
    const std::size_t n = w_value.dim(1);
    const Shape x_shape = x.value().shape();
    const bool batched = x_shape.size() == 2;
    if ((x_shape.size() != 1 && !batched) || x_shape.back() != n) {
        fail(ErrorClass::shape, "affine '" + std::string(name) + "': input " +
                                    shape_string(x_shape) + " incompatible with W " +
                                    shape_string(w_value.shape()));
    }

    Tape& tape = x.tape();
    Var w = tape.param(store, w_name);
    Var b = tape.param(store, b_name);
    // Node storage may have grown; take references only after recording the leaves.
    const Tensor& xv = x.value();

    const std::size_t rows = batched ? x_shape[0] : 1;
    Tensor out(batched ? Shape{rows, m} : Shape{m});
    auto y = linalg::view(out.data().data(), rows, m);
    y.noalias() = linalg::view(xv.data().data(), rows, n) * linalg::view(w.value().data().data(), m, n).transpose();
    y.rowwise() += linalg::view(b.value().data().data(), 1, m).row(0);

    const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
    return tape.record("affine", std::move(out), {xi, wi, bi},
                       [xi, wi, bi, rows, m, n](Tape& t, std::size_t self) {
        const auto gy = linalg::view(t.grad(self).data().data(), rows, m);
        if (t.requires_grad(wi)) {
            linalg::view(t.grad(wi).data().data(), m, n).noalias() +=
                gy.transpose() * linalg::view(t.value(xi).data().data(), rows, n);
        }
        if (t.requires_grad(bi)) {
            linalg::view(t.grad(bi).data().data(), 1, m).row(0) += gy.colwise().sum();
        }
        if (t.requires_grad(xi)) {
            linalg::view(t.grad(xi).data().data(), rows, n).noalias() +=
                gy * linalg::view(t.value(wi).data().data(), m, n);
        }
    });
}

Var relu(Var x) {
    Tape& tape = x.tape();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        margin = std::min(margin, std::abs(xv[i]));
    }
    tape.note_relu_margin(margin);
    const std::size_t xi = x.id();
    return tape.record("relu", std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const Tensor& gy = t.grad(self);
        const Tensor& xv = t.value(xi);
        Tensor& gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += gy[i];
        }
    });
}

Var sigmoid(Var x) {
    Tape& tape = x.tape();
    const Tensor& xv = x.value();
    if (!xv.all_finite()) fail(ErrorClass::numeric, "sigmoid: non-finite input");
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = stable_sigmoid(xv[i]);
    const std::size_t xi = x.id();
    return tape.record("sigmoid", std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const Tensor& gy = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
    });
}

Var activation(Activation kind, Var x) {
    switch (kind) {
        case Activation::relu: return relu(x);
        case Activation::sigmoid: return sigmoid(x);
    }
    fail(ErrorClass::config, "unsupported activation");
}

Var hadamard(Var a, Var b) {
    Tape& tape = common_tape(a, b);
    require_same_shape("hadamard", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const std::size_t ai = a.id(), bi = b.id();
    return tape.record("hadamard", std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        if (t.requires_grad(ai)) {
            const Tensor& bv = t.value(bi);
            Tensor& ga = t.grad(ai);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (t.requires_grad(bi)) {
            const Tensor& av = t.value(ai);
            Tensor& gb = t.grad(bi);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
        }
    });
}

Var add(Var a, Var b) {
    Tape& tape = common_tape(a, b);
    require_same_shape("add", a, b);
    Tensor out = a.value();
    accumulate(out, b.value());
    const std::size_t ai = a.id(), bi = b.id();
    return tape.record("add", std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
        if (t.requires_grad(ai)) accumulate(t.grad(ai), t.grad(self));
        if (t.requires_grad(bi)) accumulate(t.grad(bi), t.grad(self));
    });
}

Var sub(Var a, Var b) {
    Tape& tape = common_tape(a, b);
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    accumulate(out, b.value(), -1.0);
    const std::size_t ai = a.id(), bi = b.id();
    return tape.record("sub", std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
        if (t.requires_grad(ai)) accumulate(t.grad(ai), t.grad(self));
        if (t.requires_grad(bi)) accumulate(t.grad(bi), t.grad(self), -1.0);
    });
}

Var scale(Var a, double factor) {
    Tape& tape = a.tape();
    Tensor out = a.value();
    for (auto& v : out.data()) v *= factor;
    const std::size_t ai = a.id();
    return tape.record("scale", std::move(out), {ai}, [ai, factor](Tape& t, std::size_t self) {
        if (t.requires_grad(ai)) accumulate(t.grad(ai), t.grad(self), factor);
    });
}

Var sum(Var a) {
    Tape& tape = a.tape();
    double acc = 0.0;
    for (double v : a.value().data()) acc += v;
    const std::size_t ai = a.id();
    return tape.record("sum", Tensor::vector({acc}), {ai}, [ai](Tape& t, std::size_t self) {
        if (!t.requires_grad(ai)) return;
        const double g = t.grad(self)[0];
        for (auto& v : t.grad(ai).data()) v += g;
    });
}

Var mean_row_sq_distance(Var a, Var b) {
    require_same_shape("mean_row_sq_distance", a, b);
    const std::size_t rows = a.value().rank() == 2 ? a.value().dim(0) : 1;
    Var diff = sub(a, b);
    return scale(sum(hadamard(diff, diff)), 1.0 / static_cast<double>(rows));
}

Var project(Var a, const Tensor& weights) {
    if (weights.shape() != a.shape()) {
        fail(ErrorClass::shape, "project: weights " + shape_string(weights.shape()) +
                                    " vs value " + shape_string(a.shape()));
    }
    return sum(hadamard(a, a.tape().constant(weights)));
}

}  // namespace fspfm
