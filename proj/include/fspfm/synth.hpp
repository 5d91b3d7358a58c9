#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fspfm/tensor.hpp"

namespace fspfm {

/// Head pose in degrees, each angle in [−90, 90].
struct Pose {
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;

    double max_abs() const;
    bool is_frontal() const { return max_abs() <= kFrontalLimit; }
    bool is_profile_eligible(double min_angle = kProfileMin) const;

    static constexpr double kFrontalLimit = 10.0;
    static constexpr double kProfileMin = 40.0;
    static constexpr double kAngleLimit = 90.0;

    bool operator==(const Pose&) const = default;
};

struct PoseEmbedding {
    Pose angles;
    Tensor feature;
};

struct Sample {
    Tensor observation;
    int identity = 0;
    Pose pose;
    /// Output of the pose estimator stand-in for this capture.
    Tensor pose_feature;
};

struct DatasetSpec {
    int num_identities = 240;
    int samples_per_identity = 32;
    double frontal_fraction = 0.5;
    int observation_dim = 96;
    int pose_dim = 16;
    double noise_sigma = 0.05;
    double pose_sigma = 0.02;
    double occlusion_strength = 0.3;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Fixed "physics" of one synthetic world: which coordinate planes each Euler
/// angle rotates, the order in which yaw occludes coordinates, and the pose
/// estimator's projection. Everything is derived from the dataset seed, so
/// train and eval identities drawn from one spec share the same world.
class SyntheticWorld {
public:
    explicit SyntheticWorld(const DatasetSpec& spec);

    /// O(pose) ⊙ (R(pose)·z) + ε. `z` must have unit norm.
    Tensor observe(const Tensor& z, const Pose& pose, std::uint64_t noise_seed) const;
    Tensor observe(const Tensor& z, const Pose& pose, std::uint64_t noise_seed,
                   double noise_sigma) const;

    /// tanh(A · angles/90) + N(0, σ_pose²).
    PoseEmbedding pose_embed(const Pose& pose, std::uint64_t seed) const;
    PoseEmbedding pose_embed(const Pose& pose, std::uint64_t seed, double pose_sigma) const;

    /// Unit-norm latent of identity `k` (deterministic in the spec seed).
    Tensor identity_latent(int k) const;

    /// R(pose)·z only, without occlusion or noise.
    Tensor rotate(const Tensor& z, const Pose& pose) const;
    /// Coordinates zeroed at this pose, in occlusion order.
    std::vector<std::size_t> occluded_coordinates(const Pose& pose) const;

    const DatasetSpec& spec() const noexcept { return spec_; }
    /// Coordinate pairs rotated by yaw (0), pitch (1) and roll (2).
    const std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3>& planes() const {
        return planes_;
    }

private:
    DatasetSpec spec_;
    std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> planes_;
    std::vector<std::size_t> occlusion_order_;
    Tensor pose_projection_;  // [p, 3]
};

/// Mixes a base seed with a stream index into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

std::vector<Sample> make_dataset(const DatasetSpec& spec);

/// Samples whose identity lies in [first, last).
std::vector<Sample> select_identities(const std::vector<Sample>& samples, int first, int last);

enum class PairKind { verification, finetune };
enum class VerificationSplit { frontal_frontal, cross_pose };

std::string split_name(VerificationSplit split);

struct SamplePair {
    std::size_t a = 0;  // frontal side for finetune pairs
    std::size_t b = 0;  // profile side for finetune pairs
    bool same_identity = true;

    bool operator==(const SamplePair&) const = default;
};

/// Index pairs into the dataset they were built from.
struct PairSet {
    PairKind kind = PairKind::verification;
    std::vector<SamplePair> pairs;

    std::size_t size() const noexcept { return pairs.size(); }
};

PairSet make_finetune_pairs(const std::vector<Sample>& dataset,
                            double min_angle = Pose::kProfileMin);

PairSet make_verification_pairs(const std::vector<Sample>& dataset, VerificationSplit split,
                                std::size_t n_pairs, std::uint64_t seed);

/// Dataset file: textual header terminated by "end\n", followed by one record
/// per sample of little-endian doubles: identity, yaw, pitch, roll,
/// observation[D], pose_feature[p].
void save_dataset(const std::vector<Sample>& samples, const DatasetSpec& spec,
                  const std::filesystem::path& path);

struct LoadedDataset {
    DatasetSpec spec;
    std::vector<Sample> samples;
};

LoadedDataset load_dataset(const std::filesystem::path& path);

}  // namespace fspfm
