#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fspfm/config.hpp"
#include "fspfm/eval.hpp"

namespace fspfm {

/// Train identities and held-out identities drawn from one synthetic world.
struct DataSplit {
    std::vector<Sample> train;
    std::vector<Sample> eval;
};

DataSplit split_dataset(const std::vector<Sample>& all, const RunConfig& config);

/// Training settings for one ablation row. The fine-tune rows reuse the
/// +FSPFM stage-1 settings.
TrainConfig arm_config(const TrainConfig& base, const AblationArm& arm);

/// Extra eval samples of held-out identities, all at one pose, rendered by the
/// same world as the dataset.
std::vector<Sample> pose_probes(const RunConfig& config, const Pose& pose, std::uint64_t seed);

struct ArmResult {
    AblationArm arm;
    Checkpoint checkpoint;
    AblationRow row;
    double seconds = 0.0;
};

struct AblationRun {
    std::vector<ArmResult> arms;

    const ArmResult& arm(const std::string& name) const;
    std::vector<AblationRow> rows() const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains and scores the five rows in order on one dataset.
AblationRun run_ablation(const RunConfig& config, const ProgressFn& progress = {});

/// Append-only JSON-lines record of produced artifacts.
class Manifest {
public:
    explicit Manifest(std::filesystem::path path) : path_(std::move(path)) {}

    /// Hashes `artifact` and appends one line.
    void record(const std::string& stage, const std::filesystem::path& artifact, const std::string& config_digest,
                std::uint64_t seed, const std::string& status = "ok") const;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fspfm
