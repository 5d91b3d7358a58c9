#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fspfm/ops.hpp"
#include "fspfm/optim.hpp"
#include "helpers.hpp"

using namespace fspfm;
using testutil::random_tensor;

namespace {

ParamStore affine_store(Tensor W, Tensor b) {
    ParamStore s;
    s.add("L.W", std::move(W));
    s.add("L.b", std::move(b));
    return s;
}

}  // namespace

TEST(Tensor, ShapeMatchesData) {
    Tensor t({3, 4});
    EXPECT_EQ(t.size(), 12u);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
    EXPECT_THROW(Tensor(Shape{0}), Error);
}

TEST(ParamStore, InsertionOrderAndDuplicates) {
    ParamStore s;
    s.add("b", Tensor::vector({1}));
    s.add("a", Tensor::vector({2}));
    s.add("c", Tensor::vector({3}));
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s.entries()[0].name, "b");
    EXPECT_EQ(s.entries()[1].name, "a");
    EXPECT_EQ(s.entries()[2].name, "c");
    for (const auto& e : s.entries()) EXPECT_EQ(e.value.shape(), e.grad.shape());
    EXPECT_FSPFM_ERROR(s.add("a", Tensor::vector({0})), ErrorClass::config);
}

TEST(Affine, IdentityCase) {
    auto s = affine_store(Tensor::identity(3), Tensor({3}));
    Tape t;
    Var y = affine(s, "L", t.constant(Tensor::vector({1, 2, 3})));
    EXPECT_EQ(y.value(), Tensor::vector({1, 2, 3}));
}

TEST(Affine, ScalarCase) {
    auto s = affine_store(Tensor::matrix(1, 1, {2}), Tensor::vector({1}));
    Tape t;
    EXPECT_EQ(affine(s, "L", t.constant(Tensor::vector({3}))).value(), Tensor::vector({7}));
}

TEST(Affine, RandomMatchesHandRolledProduct) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor W = random_tensor({2, 4}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor x = random_tensor({4}, rng);
        auto s = affine_store(W, b);
        Tape t;
        const Tensor y = affine(s, "L", t.constant(x)).value();
        for (std::size_t i = 0; i < 2; ++i) {
            double acc = b[i];
            for (std::size_t j = 0; j < 4; ++j) acc += W.at(i, j) * x[j];
            EXPECT_NEAR(y[i], acc, 1e-14);
        }
    }
}

TEST(Affine, BatchRowsMatchSingleVectors) {
    std::mt19937_64 rng(4);
    auto s = affine_store(random_tensor({5, 3}, rng), random_tensor({5}, rng));
    Tensor X = random_tensor({4, 3}, rng);
    Tape t;
    const Tensor Y = affine(s, "L", t.constant(X)).value();
    for (std::size_t r = 0; r < 4; ++r) {
        const Tensor y = affine(s, "L", t.constant(take_row(X, r))).value();
        for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(Y.at(r, k), y[k], 1e-14);
    }
}

TEST(Affine, Errors) {
    auto s = affine_store(Tensor({2, 3}), Tensor({2}));
    Tape t;
    EXPECT_FSPFM_ERROR(affine(s, "missing", t.constant(Tensor({3}))), ErrorClass::config);
    EXPECT_FSPFM_ERROR(affine(s, "L", t.constant(Tensor({4}))), ErrorClass::shape);
}

TEST(Activation, Relu) {
    Tape t;
    EXPECT_EQ(relu(t.constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
}

TEST(Activation, SigmoidSymmetryPoint) {
    Tape t;
    EXPECT_EQ(sigmoid(t.constant(Tensor::vector({0}))).value()[0], 0.5);
}

TEST(Activation, SigmoidSaturatesInsideUnitInterval) {
    Tape t;
    const Tensor y = sigmoid(t.constant(Tensor::vector({-20, -5, 0, 5, 20}))).value();
    // Reference values from long double evaluation.
    for (std::size_t i = 0; i < y.size(); ++i) {
        const long double x = std::array<long double, 5>{-20, -5, 0, 5, 20}[i];
        const long double ref = 1.0L / (1.0L + std::exp(-x));
        EXPECT_GT(y[i], 0.0);
        EXPECT_LT(y[i], 1.0);
        EXPECT_NEAR(y[i], static_cast<double>(ref), 1e-15);
        if (i > 0) {
            EXPECT_GT(y[i], y[i - 1]);
        }
    }
}

TEST(Activation, SigmoidStrictlyInsideForLargeInputs) {
    for (double x : {-700.0, -100.0, -30.0, 30.0, 36.0}) {
        const double s = stable_sigmoid(x);
        EXPECT_GT(s, 0.0) << x;
        EXPECT_LT(s, 1.0) << x;
    }
}

TEST(Activation, NonFiniteInputRejected) {
    Tape t;
    EXPECT_FSPFM_ERROR(t.constant(Tensor::vector({std::nan("")})), ErrorClass::numeric);
}

TEST(Hadamard, Examples) {
    Tape t;
    EXPECT_EQ(hadamard(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({0, 0}))).value(),
              Tensor::vector({0, 0}));
    EXPECT_EQ(hadamard(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 1}))).value(),
              Tensor::vector({1, 2}));
    EXPECT_EQ(hadamard(t.constant(Tensor::vector({2, 3})), t.constant(Tensor::vector({4, -1}))).value(),
              Tensor::vector({8, -3}));
    EXPECT_FSPFM_ERROR(hadamard(t.constant(Tensor({2})), t.constant(Tensor({3}))), ErrorClass::shape);
}

TEST(Backward, SumGivesOnes) {
    ParamStore s;
    s.add("x", Tensor::vector({0.3, -2, 5}));
    Tape t;
    t.backward(sum(t.param(s, "x")));
    EXPECT_EQ(s.entry("x").grad, Tensor::vector({1, 1, 1}));
}

TEST(Backward, SigmoidOfDotMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    ParamStore s;
    s.add("w", random_tensor({6}, rng));
    const Tensor x = random_tensor({6}, rng);
    auto f = [&](Tape& t, ParamStore& st) { return sum(sigmoid(project(t.param(st, "w"), x))); };
    EXPECT_LT(testutil::fd_max_rel_error(s, f), 1e-5);
}

TEST(Backward, FrozenParameterGetsExactlyZero) {
    std::mt19937_64 rng(12);
    ParamStore s;
    s.add("L.W", random_tensor({3, 3}, rng), true);
    s.add("L.b", random_tensor({3}, rng));
    s.entry("L.W").grad.fill(0.0);
    Tape t;
    t.backward(sum(sigmoid(affine(s, "L", t.constant(random_tensor({3}, rng))))));
    for (double g : s.entry("L.W").grad.data()) EXPECT_EQ(g, 0.0);
    bool any = false;
    for (double g : s.entry("L.b").grad.data()) any |= g != 0.0;
    EXPECT_TRUE(any);
}

TEST(Backward, NonScalarLossRejected) {
    ParamStore s;
    s.add("x", Tensor::vector({1, 2}));
    Tape t;
    EXPECT_FSPFM_ERROR(t.backward(t.param(s, "x")), ErrorClass::contract);
}

TEST(Backward, VisitsEveryNodeOnce) {
    std::mt19937_64 rng(13);
    ParamStore s;
    s.add("L.W", random_tensor({4, 4}, rng));
    s.add("L.b", random_tensor({4}, rng));
    Tape t;
    Var x = t.constant(random_tensor({4}, rng));
    Var h = relu(affine(s, "L", x));
    Var loss = sum(hadamard(h, sigmoid(h)));
    // Node ids grow with append order, and every input precedes its user.
    for (std::size_t id = 0; id < t.size(); ++id)
        for (auto in : t.inputs(id)) EXPECT_LT(in, id);
    t.backward(loss);
    EXPECT_EQ(t.backward_visits(), t.size());
}

TEST(Backward, Deterministic) {
    std::mt19937_64 rng(14);
    ParamStore a;
    a.add("L.W", random_tensor({4, 3}, rng));
    a.add("L.b", random_tensor({4}, rng));
    ParamStore b = a;
    const Tensor x = random_tensor({2, 3}, rng);
    for (ParamStore* s : {&a, &b}) {
        Tape t;
        t.backward(sum(sigmoid(affine(*s, "L", t.constant(x)))));
    }
    EXPECT_TRUE(bitwise_equal(a, b));
    EXPECT_EQ(a.entry("L.W").grad, b.entry("L.W").grad);
}

TEST(Sgd, PlainStep) {
    ParamStore s;
    s.add("p", Tensor::vector({1.0}));
    s.entry("p").grad[0] = 2.0;
    SgdOptimizer opt(0.0);
    opt.step(s, 0.1);
    EXPECT_DOUBLE_EQ(s.value("p")[0], 0.8);
    EXPECT_EQ(s.entry("p").grad[0], 0.0);
}

TEST(Sgd, FrozenUnchanged) {
    ParamStore s;
    s.add("p", Tensor::vector({1.0}), true);
    s.entry("p").grad[0] = 5.0;
    SgdOptimizer opt(0.9);
    opt.step(s, 0.1);
    EXPECT_EQ(s.value("p")[0], 1.0);
}

TEST(Sgd, MomentumTwoSteps) {
    ParamStore s;
    s.add("p", Tensor::vector({0.0}));
    SgdOptimizer opt(0.9);
    for (int i = 0; i < 2; ++i) {
        s.entry("p").grad[0] = 1.0;
        opt.step(s, 1.0);
    }
    // v1 = 1, v2 = 1.9
    EXPECT_DOUBLE_EQ(s.value("p")[0], -2.9);
}

TEST(Sgd, RejectsBadSettings) {
    ParamStore s;
    s.add("p", Tensor::vector({0.0}));
    SgdOptimizer opt(0.0);
    EXPECT_FSPFM_ERROR(opt.step(s, 0.0), ErrorClass::config);
    EXPECT_FSPFM_ERROR(opt.step(s, -1.0), ErrorClass::config);
    EXPECT_FSPFM_ERROR(SgdOptimizer(1.0), ErrorClass::config);
}
