#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fspfm/param_store.hpp"
#include "fspfm/tape.hpp"
#include "fspfm/training.hpp"

namespace fspfm {

struct GradcheckOptions {
    ModelDims dims;
    int num_classes = 16;
    std::size_t batch = 4;
    int trials = 5;
    std::uint64_t seed = 42;
    double step = 1e-6;
    double tolerance = 1e-5;
    /// Entries sampled per tensor; smaller tensors are checked in full.
    std::size_t entries_per_tensor = 24;
    /// Inputs whose relu pre-activations come closer than this to zero are
    /// redrawn, since a ±step perturbation could cross the kink.
    double min_relu_margin = 1e-4;
    /// Gradients below this magnitude are compared in absolute terms.
    double abs_floor = 1e-4;
    double arcface_scale = 16.0;
    double arcface_margin = 0.3;
    double lambda = 4.0;
};

/// A scalar function of the entries of `params`. Every entry is checked,
/// including the ones that stand in for inputs.
struct GradcheckCase {
    std::string name;
    ParamStore params;
    std::function<Var(Tape&, ParamStore&)> loss;
};

using CaseFactory = std::function<std::vector<GradcheckCase>(std::uint64_t seed)>;

struct CompositeResult {
    std::string name;
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t entries = 0;
    bool pass = true;
};

struct GradcheckReport {
    std::vector<CompositeResult> composites;
    double tolerance = 0.0;
    double seconds = 0.0;

    bool pass() const;
    std::vector<std::string> failing() const;
    /// One `name max_rel_error entries PASS|FAIL` line per composite.
    std::string render() const;
};

/// Per-tensor error: max |analytic − numeric| / max(|analytic|, |numeric|, abs_floor)
/// over the sampled entries. Returns false if the case's relu margin is too small.
bool check_case(GradcheckCase& c, const GradcheckOptions& options, std::uint64_t sample_seed,
                CompositeResult& out);

/// Runs every case of `factory` for `options.trials` seeds and keeps the
/// worst error per case name.
GradcheckReport run_gradcheck(const CaseFactory& factory, const GradcheckOptions& options);

/// extractor, fspfm, attention, arcface, ada and the two stage objectives.
std::vector<GradcheckCase> standard_cases(const GradcheckOptions& options, std::uint64_t seed);

GradcheckReport gradcheck_all(const GradcheckOptions& options = {});

}  // namespace fspfm
