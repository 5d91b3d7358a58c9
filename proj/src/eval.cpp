#include "fspfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fspfm/error.hpp"
#include "fspfm/io.hpp"
#include "fspfm/ops.hpp"

namespace fspfm {

namespace {

constexpr std::size_t kFolds = 10;
constexpr std::size_t kEmbedBatch = 512;

std::string format_fixed(double v, int digits) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << v;
    return out.str();
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorClass::shape, "cosine: length mismatch");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) fail(ErrorClass::contract, "cosine of a zero vector");
    // Each factor is normalized separately so that swapping a and b is exact.
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] / na) * (b[i] / nb);
    return std::clamp(acc, -1.0, 1.0);
}

Tensor embed(Net& net, const Sample& sample, bool use_fspfm) {
    if (sample.observation.size() != net.dims.observation_dim ||
        sample.pose_feature.size() != net.dims.pose_dim) {
        fail(ErrorClass::shape, "embed: sample dims do not match the network");
    }
    Tape tape;
    Var f = extract_features(net, tape.constant(sample.observation));
    if (use_fspfm) f = frontalize(net.params, "fspfm", f, tape.constant(sample.pose_feature));
    return f.value();
}

Tensor embed_all(Net& net, const std::vector<Sample>& samples, bool use_fspfm) {
    if (samples.empty()) fail(ErrorClass::contract, "embed_all: no samples");
    Tensor out({samples.size(), net.dims.feature_dim});
    for (std::size_t start = 0; start < samples.size(); start += kEmbedBatch) {
        const std::size_t n = std::min(kEmbedBatch, samples.size() - start);
        Tensor obs({n, net.dims.observation_dim});
        Tensor pose({n, net.dims.pose_dim});
        for (std::size_t r = 0; r < n; ++r) {
            const Sample& s = samples[start + r];
            if (s.observation.size() != net.dims.observation_dim || s.pose_feature.size() != net.dims.pose_dim) {
                fail(ErrorClass::shape, "embed: sample dims do not match the network");
            }
            std::copy(s.observation.data().begin(), s.observation.data().end(), obs.row(r).begin());
            std::copy(s.pose_feature.data().begin(), s.pose_feature.data().end(), pose.row(r).begin());
        }
        Tape tape;
        Var f = extract_features(net, tape.constant(std::move(obs)));
        if (use_fspfm) f = frontalize(net.params, "fspfm", f, tape.constant(std::move(pose)));
        std::copy(f.value().data().begin(), f.value().data().end(), out.row(start).begin());
    }
    return out;
}

std::vector<double> score_pairs(const Tensor& embeddings, const PairSet& pairs) {
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& p : pairs.pairs) scores.push_back(cosine(embeddings.row(p.a), embeddings.row(p.b)));
    return scores;
}

double select_threshold(std::span<const double> scores, std::span<const char> genuine) {
    if (scores.empty() || scores.size() != genuine.size()) {
        fail(ErrorClass::contract, "select_threshold: scores and labels must be non-empty and equal length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Threshold below everything: every pair is called genuine.
    long long correct = std::count(genuine.begin(), genuine.end(), char{1});
    long long best_correct = correct;
    double best = scores[order.front()] - 1.0;

    for (std::size_t i = 0; i < order.size();) {
        const double value = scores[order[i]];
        std::size_t j = i;
        for (; j < order.size() && scores[order[j]] == value; ++j) correct += genuine[order[j]] ? -1 : 1;
        const double candidate = j < order.size() ? 0.5 * (value + scores[order[j]]) : value + 1.0;
        if (correct > best_correct) {
            best_correct = correct;
            best = candidate;
        }
        i = j;
    }
    return best;
}

VerificationResult verify_10fold(const PairSet& pairs, std::span<const double> scores, std::uint64_t seed,
                                 std::string split) {
    if (pairs.kind != PairKind::verification) fail(ErrorClass::contract, "verify_10fold needs verification pairs");
    if (scores.size() != pairs.size()) fail(ErrorClass::contract, "verify_10fold: one score per pair required");
    if (pairs.size() < kFolds) fail(ErrorClass::contract, "verify_10fold needs at least 10 pairs");

    const std::size_t n = pairs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    VerificationResult result;
    result.split = std::move(split);
    for (std::size_t k = 0; k < kFolds; ++k) {
        result.folds.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(k * n / kFolds),
                                  order.begin() + static_cast<std::ptrdiff_t>((k + 1) * n / kFolds));
    }

    for (std::size_t k = 0; k < kFolds; ++k) {
        std::vector<double> train_scores;
        std::vector<char> train_labels;
        for (std::size_t other = 0; other < kFolds; ++other) {
            if (other == k) continue;
            for (auto i : result.folds[other]) {
                train_scores.push_back(scores[i]);
                train_labels.push_back(pairs.pairs[i].same_identity ? 1 : 0);
            }
        }
        const double threshold = select_threshold(train_scores, train_labels);
        std::size_t correct = 0;
        for (auto i : result.folds[k]) {
            const bool predicted = scores[i] > threshold;
            if (predicted == pairs.pairs[i].same_identity) ++correct;
        }
        result.fold_threshold.push_back(threshold);
        result.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(result.folds[k].size()));
    }
    result.mean_accuracy =
        std::accumulate(result.fold_accuracy.begin(), result.fold_accuracy.end(), 0.0) / static_cast<double>(kFolds);
    return result;
}

double mean_residual_norm(Net& net, const std::vector<Sample>& samples) {
    const Tensor raw = embed_all(net, samples, false);
    const Tensor front = embed_all(net, samples, true);
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < raw.dim(1); ++k) {
            const double diff = front.at(i, k) - raw.at(i, k);
            sq += diff * diff;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(samples.size());
}

const std::vector<AblationArm>& ablation_arms() {
    static const std::vector<AblationArm> arms = {
        {"baseline", {false, false, false, false}},
        {"+synthetic", {true, false, false, false}},
        {"+FSPFM", {true, true, false, false}},
        {"+FT", {true, true, true, false}},
        {"+FT+ADA", {true, true, true, true}},
    };
    return arms;
}

EvalPairs make_eval_pairs(const std::vector<Sample>& eval_samples, std::size_t n_pairs, std::uint64_t seed) {
    return EvalPairs{
        make_verification_pairs(eval_samples, VerificationSplit::frontal_frontal, n_pairs, derive_seed(seed, 31)),
        make_verification_pairs(eval_samples, VerificationSplit::cross_pose, n_pairs, derive_seed(seed, 32)),
    };
}

AblationRow evaluate_checkpoint(const AblationArm& arm, const Checkpoint& ckpt, const TrainConfig& config,
                                const std::vector<Sample>& eval_samples, const EvalPairs& pairs,
                                std::uint64_t fold_seed) {
    Net net = target_net(ckpt, config);
    const Tensor embeddings = embed_all(net, eval_samples, arm.flags.fspfm);
    AblationRow row;
    row.arm = arm;
    row.frontal_frontal = verify_10fold(pairs.frontal_frontal, score_pairs(embeddings, pairs.frontal_frontal),
                                        fold_seed, split_name(VerificationSplit::frontal_frontal));
    row.cross_pose = verify_10fold(pairs.cross_pose, score_pairs(embeddings, pairs.cross_pose), fold_seed,
                                   split_name(VerificationSplit::cross_pose));
    return row;
}

std::vector<AblationRow> ablation_report(const std::vector<Sample>& eval_samples,
                                         const std::vector<ArmCheckpoint>& arms, const TrainConfig& config,
                                         const EvalPairs& pairs, std::uint64_t fold_seed) {
    std::vector<AblationRow> rows;
    for (const auto& [arm, ckpt] : arms) {
        if (!ckpt) fail(ErrorClass::dependency, "missing checkpoint for ablation row '" + arm.name + "'");
        rows.push_back(evaluate_checkpoint(arm, *ckpt, config, eval_samples, pairs, fold_seed));
    }
    return rows;
}

std::string render_report_kv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "report.version = 1\n";
    out << "report.rows = " << rows.size() << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::string p = "row." + std::to_string(i) + ".";
        out << p << "name = " << r.arm.name << "\n";
        out << p << "synthetic = " << r.arm.flags.synthetic << "\n";
        out << p << "fspfm = " << r.arm.flags.fspfm << "\n";
        out << p << "ft = " << r.arm.flags.ft << "\n";
        out << p << "ada = " << r.arm.flags.ada << "\n";
        for (const auto* v : {&r.frontal_frontal, &r.cross_pose}) {
            std::string split = v->split;
            std::replace(split.begin(), split.end(), '-', '_');
            out << p << split << ".accuracy = " << format_fixed(v->mean_accuracy, 4) << "\n";
            out << p << split << ".folds =";
            for (double a : v->fold_accuracy) out << " " << format_fixed(a, 4);
            out << "\n";
            out << p << split << ".thresholds =";
            for (double t : v->fold_threshold) out << " " << io::format_double(t);
            out << "\n";
        }
    }
    return out.str();
}

std::string render_report_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    auto mark = [](bool b) { return b ? "x" : "-"; };
    out << "row          synth  FSPFM  FT  ADA | frontal-frontal  cross-pose\n";
    out << std::string(35, '-') << "+" << std::string(29, '-') << "\n";
    for (const auto& r : rows) {
        std::string name = r.arm.name;
        name.resize(12, ' ');
        out << name << " " << mark(r.arm.flags.synthetic) << "      " << mark(r.arm.flags.fspfm) << "      "
            << mark(r.arm.flags.ft) << "   " << mark(r.arm.flags.ada) << "   |";
        std::string ff = format_fixed(100.0 * r.frontal_frontal.mean_accuracy, 2);
        std::string cp = format_fixed(100.0 * r.cross_pose.mean_accuracy, 2);
        out << std::string(17 - ff.size(), ' ') << ff << std::string(12 - cp.size(), ' ') << cp << "\n";
    }
    return out.str();
}

}  // namespace fspfm
