#include "fspfm/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fspfm/error.hpp"
#include "fspfm/fspfm.hpp"
#include "fspfm/io.hpp"
#include "fspfm/losses.hpp"
#include "fspfm/ops.hpp"

namespace fspfm {

namespace {

constexpr int kMaxRedraws = 50;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double sigma = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

double evaluate(GradcheckCase& c) {
    Tape tape;
    return c.loss(tape, c.params).value()[0];
}

void add_random_mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                    std::size_t out, std::uint64_t seed) {
    add_uniform_affine(store, prefix + ".l1", in, hidden, derive_seed(seed, 1));
    add_uniform_affine(store, prefix + ".l2", hidden, out, derive_seed(seed, 2));
}

// FSPFM with every layer random: the zero-initialized residual outputs would
// leave the hidden layers with no gradient to check.
void add_random_fspfm(ParamStore& store, const std::string& prefix, const ModelDims& dims, std::uint64_t seed) {
    const std::size_t d = dims.feature_dim;
    add_random_mlp(store, prefix + ".T1", d, d, d, derive_seed(seed, 1));
    add_random_mlp(store, prefix + ".T2", d, d, d, derive_seed(seed, 2));
    add_random_mlp(store, prefix + ".P1", dims.pose_dim, d, d, derive_seed(seed, 3));
    add_random_mlp(store, prefix + ".P2", dims.pose_dim, d, d, derive_seed(seed, 4));
}

Var extractor(ParamStore& s, Var x) { return affine(s, "extractor.l2", relu(affine(s, "extractor.l1", x))); }

}  // namespace

bool GradcheckReport::pass() const {
    return std::all_of(composites.begin(), composites.end(), [](const auto& c) { return c.pass; });
}

std::vector<std::string> GradcheckReport::failing() const {
    std::vector<std::string> out;
    for (const auto& c : composites) {
        if (!c.pass) out.push_back(c.name);
    }
    return out;
}

std::string GradcheckReport::render() const {
    std::ostringstream out;
    out.setf(std::ios::scientific);
    out.precision(3);
    for (const auto& c : composites) {
        std::string name = c.name;
        name.resize(10, ' ');
        out << name << " " << c.max_rel_error << "  entries=" << c.entries;
        if (!c.worst_tensor.empty()) out << "  worst=" << c.worst_tensor;
        out << "  " << (c.pass ? "PASS" : "FAIL") << "\n";
    }
    return out.str();
}

bool check_case(GradcheckCase& c, const GradcheckOptions& options, std::uint64_t sample_seed,
                CompositeResult& out) {
    c.params.zero_grad();
    {
        Tape tape;
        Var loss = c.loss(tape, c.params);
        if (tape.min_relu_margin() < options.min_relu_margin) return false;
        tape.backward(loss);
    }

    std::mt19937_64 rng(sample_seed);
    out.name = c.name;
    for (std::size_t e = 0; e < c.params.entries().size(); ++e) {
        if (c.params.entries()[e].frozen) continue;
        const std::string name = c.params.entries()[e].name;
        const std::size_t n = c.params.entries()[e].value.size();
        std::vector<std::size_t> picks(n);
        std::iota(picks.begin(), picks.end(), 0);
        if (n > options.entries_per_tensor) {
            std::shuffle(picks.begin(), picks.end(), rng);
            picks.resize(options.entries_per_tensor);
        }
        double worst_diff = 0.0;
        double magnitude = options.abs_floor;
        for (auto k : picks) {
            const double analytic = c.params.entries()[e].grad[k];
            const double original = c.params.entries()[e].value[k];
            c.params.entries()[e].value[k] = original + options.step;
            const double up = evaluate(c);
            c.params.entries()[e].value[k] = original - options.step;
            const double down = evaluate(c);
            c.params.entries()[e].value[k] = original;
            const double numeric = (up - down) / (2.0 * options.step);
            worst_diff = std::max(worst_diff, std::abs(analytic - numeric));
            magnitude = std::max({magnitude, std::abs(analytic), std::abs(numeric)});
        }
        out.entries += picks.size();
        const double rel = worst_diff / magnitude;
        if (rel >= out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst_tensor = name;
        }
    }
    out.pass = out.max_rel_error < options.tolerance;
    return true;
}

GradcheckReport run_gradcheck(const CaseFactory& factory, const GradcheckOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> order;
    std::map<std::string, CompositeResult> worst;
    for (int trial = 0; trial < options.trials; ++trial) {
        const std::size_t count = factory(derive_seed(options.seed, 1, static_cast<std::uint64_t>(trial))).size();
        for (std::size_t i = 0; i < count; ++i) {
            bool done = false;
            for (int redraw = 0; redraw < kMaxRedraws && !done; ++redraw) {
                const std::uint64_t s = derive_seed(options.seed, 2 + static_cast<std::uint64_t>(redraw),
                                                    static_cast<std::uint64_t>(trial));
                auto cases = factory(redraw == 0 ? derive_seed(options.seed, 1, static_cast<std::uint64_t>(trial)) : s);
                CompositeResult r;
                if (!check_case(cases.at(i), options, derive_seed(s, 9, i), r)) continue;
                done = true;
                auto it = worst.find(r.name);
                if (it == worst.end()) {
                    order.push_back(r.name);
                    worst.emplace(r.name, r);
                } else {
                    const std::size_t total = it->second.entries + r.entries;
                    if (r.max_rel_error > it->second.max_rel_error) it->second = r;
                    it->second.entries = total;
                    it->second.pass = it->second.max_rel_error < options.tolerance;
                }
            }
            if (!done) fail(ErrorClass::numeric, "gradcheck: could not draw inputs away from relu kinks");
        }
    }
    GradcheckReport report;
    report.tolerance = options.tolerance;
    for (const auto& name : order) report.composites.push_back(worst.at(name));
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<GradcheckCase> standard_cases(const GradcheckOptions& o, std::uint64_t seed) {
    const ModelDims& dims = o.dims;
    const std::size_t B = o.batch, D = dims.observation_dim, d = dims.feature_dim, p = dims.pose_dim;
    const auto C = static_cast<std::size_t>(o.num_classes);
    std::mt19937_64 rng(seed);
    std::vector<int> labels(B);
    std::uniform_int_distribution<int> pick(0, o.num_classes - 1);
    for (auto& y : labels) y = pick(rng);
    const Tensor probe = random_tensor({B, d}, rng);
    const ArcFaceHead head{"head.W", o.arcface_scale, o.arcface_margin};
    const double lambda = o.lambda;

    std::vector<GradcheckCase> cases;

    {
        GradcheckCase c{"extractor", {}, {}};
        add_uniform_affine(c.params, "extractor.l1", D, dims.hidden_dim, derive_seed(seed, 11));
        add_uniform_affine(c.params, "extractor.l2", dims.hidden_dim, d, derive_seed(seed, 12));
        c.params.add("x", random_tensor({B, D}, rng));
        c.loss = [probe](Tape& t, ParamStore& s) { return project(extractor(s, t.param(s, "x")), probe); };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"fspfm", {}, {}};
        add_random_fspfm(c.params, "fspfm", dims, derive_seed(seed, 13));
        c.params.add("f", random_tensor({B, d}, rng));
        c.params.add("theta", random_tensor({B, p}, rng));
        c.loss = [probe](Tape& t, ParamStore& s) {
            return project(frontalize(s, "fspfm", t.param(s, "f"), t.param(s, "theta")), probe);
        };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"attention", {}, {}};
        add_random_mlp(c.params, "attention", d, d, d, derive_seed(seed, 14));
        c.params.add("f", random_tensor({B, d}, rng));
        c.loss = [probe](Tape& t, ParamStore& s) {
            return project(attention_weights(s, "attention", t.param(s, "f")), probe);
        };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"arcface", {}, {}};
        c.params.add("head.W", random_tensor({C, d}, rng));
        c.params.add("f", random_tensor({B, d}, rng));
        c.loss = [head, labels](Tape& t, ParamStore& s) { return arcface_loss(s, head, t.param(s, "f"), labels); };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"ada", {}, {}};
        add_random_mlp(c.params, "attention", d, d, d, derive_seed(seed, 15));
        add_random_fspfm(c.params, "fspfm", dims, derive_seed(seed, 16));
        c.params.add("u", random_tensor({B, d}, rng));
        c.params.add("ff", random_tensor({B, d}, rng));
        c.params.add("fp", random_tensor({B, d}, rng));
        c.params.add("theta", random_tensor({B, p}, rng));
        c.loss = [](Tape& t, ParamStore& s) {
            Var u = hadamard(t.param(s, "u"), attention_weights(s, "attention", t.param(s, "ff")));
            Var v = frontalize(s, "fspfm", t.param(s, "fp"), t.param(s, "theta"));
            return ada_loss(u, v);
        };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"pretrain", {}, {}};
        add_uniform_affine(c.params, "extractor.l1", D, dims.hidden_dim, derive_seed(seed, 17));
        add_uniform_affine(c.params, "extractor.l2", dims.hidden_dim, d, derive_seed(seed, 18));
        add_random_fspfm(c.params, "fspfm", dims, derive_seed(seed, 19));
        c.params.add("head.W", random_tensor({C, d}, rng));
        c.params.add("x", random_tensor({B, D}, rng));
        c.params.add("theta", random_tensor({B, p}, rng));
        c.loss = [head, labels](Tape& t, ParamStore& s) {
            Var f = frontalize(s, "fspfm", extractor(s, t.param(s, "x")), t.param(s, "theta"));
            return arcface_loss(s, head, f, labels);
        };
        cases.push_back(std::move(c));
    }
    {
        GradcheckCase c{"total", {}, {}};
        add_random_mlp(c.params, "attention", d, d, d, derive_seed(seed, 20));
        add_random_fspfm(c.params, "fspfm", dims, derive_seed(seed, 21));
        c.params.add("head.W", random_tensor({C, d}, rng));
        c.params.add("u", random_tensor({B, d}, rng));
        c.params.add("ff", random_tensor({B, d}, rng));
        c.params.add("fp", random_tensor({B, d}, rng));
        c.params.add("theta", random_tensor({B, p}, rng));
        c.loss = [head, labels, lambda](Tape& t, ParamStore& s) {
            Var u = hadamard(t.param(s, "u"), attention_weights(s, "attention", t.param(s, "ff")));
            Var v = frontalize(s, "fspfm", t.param(s, "fp"), t.param(s, "theta"));
            return total_loss(arcface_loss(s, head, v, labels), ada_loss(u, v), lambda);
        };
        cases.push_back(std::move(c));
    }
    return cases;
}

GradcheckReport gradcheck_all(const GradcheckOptions& options) {
    return run_gradcheck([&options](std::uint64_t seed) { return standard_cases(options, seed); }, options);
}

}  // namespace fspfm
