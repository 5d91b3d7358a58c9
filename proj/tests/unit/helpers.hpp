#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fspfm/error.hpp"
#include "fspfm/param_store.hpp"
#include "fspfm/tape.hpp"
#include "fspfm/tensor.hpp"

// Runs `stmt` and checks that it throws fspfm::Error of class `cls`.
#define EXPECT_FSPFM_ERROR(stmt, cls)                                                  \
    do {                                                                               \
        bool thrown_ = false;                                                          \
        try {                                                                          \
            stmt;                                                                      \
        } catch (const ::fspfm::Error& e_) {                                           \
            thrown_ = true;                                                            \
            EXPECT_EQ(::fspfm::error_class_name(e_.error_class()), ::fspfm::error_class_name(cls)) \
                << "message: " << e_.what();                                           \
        }                                                                              \
        EXPECT_TRUE(thrown_) << "expected fspfm::Error from " #stmt;                   \
    } while (0)

namespace testutil {

inline fspfm::Tensor random_tensor(fspfm::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    fspfm::Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Plain loops, deliberately not sharing code with the library.
inline std::vector<double> matvec(const fspfm::Tensor& W, const std::vector<double>& x) {
    std::vector<double> y(W.dim(0), 0.0);
    for (std::size_t i = 0; i < W.dim(0); ++i)
        for (std::size_t j = 0; j < W.dim(1); ++j) y[i] += W.at(i, j) * x[j];
    return y;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Central differences of `f` over every entry of every parameter in `store`.
// Returns the largest relative error against the tape gradient, using
// max(|a|,|n|,floor) as the denominator.
inline double fd_max_rel_error(fspfm::ParamStore& store,
                               const std::function<fspfm::Var(fspfm::Tape&, fspfm::ParamStore&)>& f,
                               double step = 1e-6, double floor = 1e-4) {
    store.zero_grad();
    {
        fspfm::Tape tape;
        tape.backward(f(tape, store));
    }
    double worst = 0.0;
    for (auto& e : store.entries()) {
        if (e.frozen) continue;
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double orig = e.value[i];
            e.value[i] = orig + step;
            double up;
            {
                fspfm::Tape t;
                up = f(t, store).value()[0];
            }
            e.value[i] = orig - step;
            double down;
            {
                fspfm::Tape t;
                down = f(t, store).value()[0];
            }
            e.value[i] = orig;
            const double numeric = (up - down) / (2 * step);
            const double analytic = e.grad[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

}  // namespace testutil
