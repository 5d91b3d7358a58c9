#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fspfm/checkpoint.hpp"
#include "fspfm/fspfm.hpp"
#include "fspfm/losses.hpp"
#include "fspfm/param_store.hpp"
#include "fspfm/synth.hpp"
#include "fspfm/tape.hpp"

namespace fspfm {

struct ModelDims {
    std::size_t observation_dim = 96;
    std::size_t hidden_dim = 128;
    std::size_t feature_dim = 64;
    std::size_t pose_dim = 16;
};

struct PretrainConfig {
    int epochs = 20;
    int batch_size = 256;
    double lr = 0.1;
    double momentum = 0.5;
    std::vector<int> decay_epochs{10, 13, 16, 18};
    double decay_factor = 0.1;
    /// Train through the frontalization module (false: plain extractor + head).
    bool use_fspfm = true;
    /// Restrict training to frontal captures (the no-synthetic-data baseline).
    bool frontal_only = false;
};

struct FinetuneConfig {
    int epochs = 50;
    int batch_size = 256;
    double lr = 0.001;
    double momentum = 0.9;
    double lambda = 4.0;
    /// False replaces AM(·) by all-ones, i.e. plain feature adaptation.
    bool use_attention = true;
    /// Output bias of the fresh attention layer; initial weights are sigmoid(bias).
    double attention_init_bias = 0.0;
    double min_profile_angle = 40.0;
};

struct TrainConfig {
    ModelDims dims;
    int num_classes = 200;
    double arcface_scale = 16.0;
    double arcface_margin = 0.3;
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    std::uint64_t seed = 42;

    ArcFaceHead head() const { return ArcFaceHead{"head.W", arcface_scale, arcface_margin}; }
    void validate() const;
};

/// One recognition network. Parameter names:
///   extractor.l1 (D→h), extractor.l2 (h→d), fspfm.*, head.W [classes,d],
///   and attention.* when the net carries an attention layer.
struct Net {
    ModelDims dims;
    int num_classes = 0;
    ParamStore params;

    bool has_attention() const { return params.contains("attention.l1.W"); }
};

Net init_net(const ModelDims& dims, int num_classes, std::uint64_t seed);

/// φ(x): affine → relu → affine.
Var extract_features(Net& net, Var observations);

/// Frozen forward pass over many samples, batched for speed.
Tensor extract_all(Net& net, const std::vector<Sample>& samples, std::span<const std::size_t> indices);
Tensor frontalize_all(Net& net, const Tensor& features, const std::vector<Sample>& samples,
                      std::span<const std::size_t> indices);

/// base_lr · factor^(number of decay epochs ≤ epoch).
double lr_schedule(int epoch, const PretrainConfig& config);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double mean_total = 0.0;
    double mean_arcface = 0.0;
    double mean_ada = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

/// Identities >= config.num_classes are rejected; samples are otherwise used as given.
TrainResult pretrain(const std::vector<Sample>& dataset, const TrainConfig& config);

/// F-Net (supervising, frontal branch) and P-Net (adapted, profile branch).
struct TwinNets {
    Net fnet;
    Net pnet;
};

/// Both nets inherit the stage-1 weights. F-Net gains a fresh attention layer
/// when `config.finetune.use_attention`; afterwards only F-Net.attention and
/// P-Net.fspfm are trainable.
TwinNets clone_nets(const Checkpoint& stage1, const TrainConfig& config);

/// Pair-wise adaptation of P-Net's FSPFM (and F-Net's attention). Checkpoint
/// tensors are stored as fnet.<name> and pnet.<name>.
using FinetuneEpochFn = std::function<void(const EpochStats&, const TwinNets&)>;

TrainResult finetune(TwinNets& nets, const std::vector<Sample>& dataset, const PairSet& pairs,
                     const TrainConfig& config, const FinetuneEpochFn& on_epoch = {});

/// Loads the net used for recognition: the single net of a stage-1
/// checkpoint, or P-Net of a stage-2 one.
Net target_net(const Checkpoint& ckpt, const TrainConfig& config);

/// Order-sensitive digest of every value in a store, used by freezing checks.
std::string params_digest(const ParamStore& store, std::string_view prefix = "");

}  // namespace fspfm
