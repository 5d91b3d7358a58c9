#include "fspfm/pipeline.hpp"

#include <chrono>
#include <optional>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fspfm/error.hpp"
#include "fspfm/io.hpp"

namespace fspfm {

namespace {

constexpr std::uint64_t kStreamProbe = 41;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    return fmt::format("{:%FT%TZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

}  // namespace

DataSplit split_dataset(const std::vector<Sample>& all, const RunConfig& config) {
    const int total = config.train_identities + config.eval_identities;
    return DataSplit{select_identities(all, 0, config.train_identities),
                     select_identities(all, config.train_identities, total)};
}

TrainConfig arm_config(const TrainConfig& base, const AblationArm& arm) {
    TrainConfig c = base;
    c.pretrain.frontal_only = !arm.flags.synthetic;
    // Fine-tuned rows start from the +FSPFM checkpoint.
    c.pretrain.use_fspfm = arm.flags.fspfm;
    c.finetune.use_attention = arm.flags.ada;
    return c;
}

std::vector<Sample> pose_probes(const RunConfig& config, const Pose& pose, std::uint64_t seed) {
    const SyntheticWorld world(config.data);
    std::vector<Sample> out;
    const int first = config.train_identities;
    const int last = first + config.eval_identities;
    for (int k = first; k < last; ++k) {
        const std::uint64_t s = derive_seed(seed, kStreamProbe, static_cast<std::uint64_t>(k));
        Sample sample;
        sample.identity = k;
        sample.pose = pose;
        sample.observation = world.observe(world.identity_latent(k), pose, derive_seed(s, 1));
        sample.pose_feature = world.pose_embed(pose, derive_seed(s, 2)).feature;
        out.push_back(std::move(sample));
    }
    return out;
}

const ArmResult& AblationRun::arm(const std::string& name) const {
    for (const auto& a : arms) {
        if (a.arm.name == name) return a;
    }
    fail(ErrorClass::dependency, "no ablation row named '" + name + "'");
}

std::vector<AblationRow> AblationRun::rows() const {
    std::vector<AblationRow> out;
    for (const auto& a : arms) out.push_back(a.row);
    return out;
}

AblationRun run_ablation(const RunConfig& config, const ProgressFn& progress) {
    const std::vector<Sample> all = make_dataset(config.data);
    const DataSplit split = split_dataset(all, config);
    const EvalPairs eval_pairs = make_eval_pairs(split.eval, config.eval.pairs, config.eval.pair_seed);
    const PairSet ft_pairs = make_finetune_pairs(split.train, config.train.finetune.min_profile_angle);

    AblationRun run;
    run.arms.reserve(ablation_arms().size());
    // index, not pointer: arms grows while the fine-tune rows read it
    std::optional<std::size_t> stage1;
    for (const auto& arm : ablation_arms()) {
        const auto t0 = std::chrono::steady_clock::now();
        const TrainConfig c = arm_config(config.train, arm);
        ArmResult r{arm, {}, {}, 0.0};
        if (!arm.flags.ft) {
            r.checkpoint = pretrain(split.train, c).checkpoint;
        } else {
            if (!stage1) fail(ErrorClass::dependency, "row '" + arm.name + "' needs the +FSPFM checkpoint");
            TwinNets nets = clone_nets(run.arms[*stage1].checkpoint, c);
            r.checkpoint = finetune(nets, split.train, ft_pairs, c).checkpoint;
        }
        r.row = evaluate_checkpoint(arm, r.checkpoint, c, split.eval, eval_pairs, config.eval.pair_seed);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run.arms.push_back(std::move(r));
        if (arm.flags.fspfm && !arm.flags.ft) stage1 = run.arms.size() - 1;
        if (progress) {
            const auto& last = run.arms.back();
            progress(fmt::format("{}: frontal={:.4f} cross={:.4f} ({:.1f}s)", arm.name,
                                 last.row.frontal_frontal.mean_accuracy, last.row.cross_pose.mean_accuracy,
                                 last.seconds));
        }
    }
    return run;
}

void Manifest::record(const std::string& stage, const std::filesystem::path& artifact,
                      const std::string& config_digest, std::uint64_t seed, const std::string& status) const {
    nlohmann::json line = {
        {"stage", stage},
        {"path", artifact.string()},
        {"sha256", io::sha256_file(artifact)},
        {"config_digest", config_digest},
        {"seed", seed},
        {"status", status},
        {"time", utc_now()},
    };
    if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    out << line.dump() << "\n";
    if (!out) fail(ErrorClass::io, "cannot append to manifest " + path_.string());
}

}  // namespace fspfm
