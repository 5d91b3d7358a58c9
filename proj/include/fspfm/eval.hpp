#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fspfm/checkpoint.hpp"
#include "fspfm/synth.hpp"
#include "fspfm/training.hpp"

namespace fspfm {

double cosine(std::span<const double> a, std::span<const double> b);

/// Extractor output for one sample, optionally passed through FSPFM with the
/// sample's own pose feature.
Tensor embed(Net& net, const Sample& sample, bool use_fspfm);
/// Batched form; row i is embed(net, samples[i], use_fspfm).
Tensor embed_all(Net& net, const std::vector<Sample>& samples, bool use_fspfm);

std::vector<double> score_pairs(const Tensor& embeddings, const PairSet& pairs);

struct VerificationResult {
    std::string split;
    double mean_accuracy = 0.0;
    std::vector<double> fold_accuracy;
    std::vector<double> fold_threshold;
    /// Pair indices of each fold.
    std::vector<std::vector<std::size_t>> folds;
};

/// Threshold maximizing accuracy of the rule `score > t` on the given pairs.
/// Candidates are the midpoints between consecutive sorted unique scores plus
/// one point below the minimum and one above the maximum; ties go to the
/// smallest candidate.
double select_threshold(std::span<const double> scores, std::span<const char> genuine);

/// 10-fold protocol: pairs are shuffled with `seed` and cut into 10
/// contiguous folds; each fold is scored at the threshold selected on the
/// other nine.
VerificationResult verify_10fold(const PairSet& pairs, std::span<const double> scores,
                                 std::uint64_t seed = 0, std::string split = "");

/// Mean ‖frontalize(f,θ) − f‖ over samples.
double mean_residual_norm(Net& net, const std::vector<Sample>& samples);

struct AblationFlags {
    bool synthetic = false;
    bool fspfm = false;
    bool ft = false;
    bool ada = false;

    bool operator==(const AblationFlags&) const = default;
};

struct AblationArm {
    std::string name;
    AblationFlags flags;
};

/// The five rows: baseline; +synthetic profiles; +FSPFM; +fine-tuning;
/// +fine-tuning with attention-guided adaptation.
const std::vector<AblationArm>& ablation_arms();

struct AblationRow {
    AblationArm arm;
    VerificationResult frontal_frontal;
    VerificationResult cross_pose;
};

struct EvalPairs {
    PairSet frontal_frontal;
    PairSet cross_pose;
};

/// Verification pairs over the held-out samples for both splits.
EvalPairs make_eval_pairs(const std::vector<Sample>& eval_samples, std::size_t n_pairs, std::uint64_t seed);

/// Scores one checkpoint on both splits.
AblationRow evaluate_checkpoint(const AblationArm& arm, const Checkpoint& ckpt, const TrainConfig& config,
                                const std::vector<Sample>& eval_samples, const EvalPairs& pairs,
                                std::uint64_t fold_seed);

struct ArmCheckpoint {
    AblationArm arm;
    const Checkpoint* checkpoint = nullptr;
};

/// Rows in the order given. A missing checkpoint is a `dependency` error naming the row.
std::vector<AblationRow> ablation_report(const std::vector<Sample>& eval_samples,
                                         const std::vector<ArmCheckpoint>& arms, const TrainConfig& config,
                                         const EvalPairs& pairs, std::uint64_t fold_seed);

/// `key = value` lines (schema documented in docs/formats.md).
std::string render_report_kv(const std::vector<AblationRow>& rows);
/// Aligned text table, accuracies in percent.
std::string render_report_table(const std::vector<AblationRow>& rows);

}  // namespace fspfm
