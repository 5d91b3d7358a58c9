#include "fspfm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fspfm/config.hpp"
#include "fspfm/error.hpp"
#include "fspfm/io.hpp"
#include "fspfm/ops.hpp"
#include "fspfm/optim.hpp"

namespace fspfm {

namespace {

enum Stream : std::uint64_t {
    kStreamExtractor = 11,
    kStreamFspfm = 12,
    kStreamHead = 13,
    kStreamAttention = 14,
    kStreamPretrainShuffle = 21,
    kStreamFinetuneShuffle = 22,
};

constexpr std::size_t kEvalBatch = 512;

Tensor gather_rows(const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                   bool observations) {
    const std::size_t cols = observations ? samples[indices[0]].observation.size()
                                          : samples[indices[0]].pose_feature.size();
    Tensor out({indices.size(), cols});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const Tensor& src = observations ? samples[indices[r]].observation
                                         : samples[indices[r]].pose_feature;
        if (src.size() != cols) fail(ErrorClass::shape, "sample dimensions are inconsistent");
        std::copy(src.data().begin(), src.data().end(), out.row(r).begin());
    }
    return out;
}

Tensor gather_matrix_rows(const Tensor& matrix, std::span<const std::size_t> rows) {
    const std::size_t cols = matrix.dim(1);
    Tensor out({rows.size(), cols});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = matrix.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

void check_dims(const Net& net, const std::vector<Sample>& samples) {
    for (const auto& s : samples) {
        if (s.observation.size() != net.dims.observation_dim || s.pose_feature.size() != net.dims.pose_dim) {
            fail(ErrorClass::shape, "sample of shape obs" + shape_string(s.observation.shape()) + "/pose" +
                                        shape_string(s.pose_feature.shape()) +
                                        " does not match the configured model dims");
        }
    }
}

Checkpoint start_checkpoint(int stage, int epoch, const TrainConfig& config) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.epoch = epoch;
    ckpt.seed = config.seed;
    ckpt.config_digest = train_config_digest(config);
    for (auto& [k, v] : train_config_entries(config)) ckpt.metadata.emplace_back("config." + k, v);
    return ckpt;
}

[[noreturn]] void rethrow_numeric(const Error& e, const char* stage, int epoch, std::size_t batch) {
    fail(ErrorClass::numeric, std::string(stage) + " diverged at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch) + ": " + e.what());
}

}  // namespace

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorClass::config, what); };
    if (dims.observation_dim == 0 || dims.hidden_dim == 0 || dims.feature_dim == 0 || dims.pose_dim == 0) {
        bad("model dimensions must be positive");
    }
    if (num_classes < 2) bad("need at least two training classes");
    head().validate();
    if (pretrain.epochs < 1 || pretrain.batch_size < 1) bad("pretrain epochs and batch size must be positive");
    if (!(pretrain.lr > 0.0)) bad("pretrain.lr must be positive");
    if (!(pretrain.momentum >= 0.0 && pretrain.momentum < 1.0)) bad("pretrain.momentum must lie in [0,1)");
    if (!(pretrain.decay_factor > 0.0 && pretrain.decay_factor <= 1.0)) bad("pretrain.decay_factor must lie in (0,1]");
    for (std::size_t i = 0; i < pretrain.decay_epochs.size(); ++i) {
        const int e = pretrain.decay_epochs[i];
        if (e <= 0 || e >= pretrain.epochs) bad("decay epochs must lie in (0, pretrain.epochs)");
        if (i > 0 && e <= pretrain.decay_epochs[i - 1]) bad("decay epochs must be strictly increasing");
    }
    if (finetune.epochs < 1 || finetune.batch_size < 1) bad("finetune epochs and batch size must be positive");
    if (!(finetune.lr > 0.0)) bad("finetune.lr must be positive");
    if (!(finetune.momentum >= 0.0 && finetune.momentum < 1.0)) bad("finetune.momentum must lie in [0,1)");
    if (!(finetune.lambda >= 0.0) || !std::isfinite(finetune.lambda)) bad("lambda must be a non-negative number");
    if (!(finetune.min_profile_angle > Pose::kFrontalLimit && finetune.min_profile_angle <= Pose::kAngleLimit)) {
        bad("finetune.min_profile_angle must lie in (10, 90]");
    }
}

Net init_net(const ModelDims& dims, int num_classes, std::uint64_t seed) {
    Net net;
    net.dims = dims;
    net.num_classes = num_classes;
    add_uniform_affine(net.params, "extractor.l1", dims.observation_dim, dims.hidden_dim,
                       derive_seed(seed, kStreamExtractor, 1));
    add_uniform_affine(net.params, "extractor.l2", dims.hidden_dim, dims.feature_dim,
                       derive_seed(seed, kStreamExtractor, 2));
    init_fspfm(net.params, "fspfm", FspfmDims{dims.feature_dim, dims.pose_dim},
               derive_seed(seed, kStreamFspfm));
    std::mt19937_64 rng(derive_seed(seed, kStreamHead));
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.feature_dim));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Tensor head({static_cast<std::size_t>(num_classes), dims.feature_dim});
    for (auto& v : head.data()) v = uniform(rng);
    net.params.add("head.W", std::move(head));
    return net;
}

Var extract_features(Net& net, Var observations) {
    Var hidden = relu(affine(net.params, "extractor.l1", observations));
    return affine(net.params, "extractor.l2", hidden);
}

Tensor extract_all(Net& net, const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
    Tensor out({std::max<std::size_t>(indices.size(), 1), net.dims.feature_dim});
    for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
        const auto chunk = indices.subspan(start, std::min(kEvalBatch, indices.size() - start));
        Tape tape;
        Var f = extract_features(net, tape.constant(gather_rows(samples, chunk, true)));
        const Tensor& fv = f.value();
        std::copy(fv.data().begin(), fv.data().end(), out.row(start).begin());
    }
    return out;
}

Tensor frontalize_all(Net& net, const Tensor& features, const std::vector<Sample>& samples,
                      std::span<const std::size_t> indices) {
    Tensor out(features.shape());
    for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, indices.size() - start);
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), start);
        Tape tape;
        Var f = tape.constant(gather_matrix_rows(features, rows));
        Var theta = tape.constant(gather_rows(samples, indices.subspan(start, n), false));
        Var g = frontalize(net.params, "fspfm", f, theta);
        std::copy(g.value().data().begin(), g.value().data().end(), out.row(start).begin());
    }
    return out;
}

double lr_schedule(int epoch, const PretrainConfig& config) {
    if (epoch < 0 || epoch >= config.epochs) {
        fail(ErrorClass::contract, "epoch " + std::to_string(epoch) + " outside [0," +
                                       std::to_string(config.epochs) + ")");
    }
    double lr = config.lr;
    for (int decay : config.decay_epochs) {
        if (decay <= epoch) lr *= config.decay_factor;
    }
    return lr;
}

TrainResult pretrain(const std::vector<Sample>& dataset, const TrainConfig& config) {
    config.validate();
    Net net = init_net(config.dims, config.num_classes, config.seed);

    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& s = dataset[i];
        if (s.identity < 0 || s.identity >= config.num_classes) {
            fail(ErrorClass::contract, "training sample identity " + std::to_string(s.identity) +
                                           " outside [0," + std::to_string(config.num_classes) + ")");
        }
        if (!config.pretrain.frontal_only || s.pose.is_frontal()) usable.push_back(i);
    }
    if (usable.empty()) fail(ErrorClass::contract, "pretrain: no usable training samples");
    check_dims(net, dataset);

    const ArcFaceHead head = config.head();
    SgdOptimizer optimizer(config.pretrain.momentum);
    TrainResult result;
    const auto batch_size = static_cast<std::size_t>(config.pretrain.batch_size);

    for (int epoch = 0; epoch < config.pretrain.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, config.pretrain);
        std::vector<std::size_t> order = usable;
        std::mt19937_64 rng(derive_seed(config.seed, kStreamPretrainShuffle, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size, ++batches) {
            const auto batch = std::span<const std::size_t>(order).subspan(
                start, std::min(batch_size, order.size() - start));
            std::vector<int> labels;
            labels.reserve(batch.size());
            for (auto i : batch) labels.push_back(dataset[i].identity);
            try {
                Tape tape;
                Var features = extract_features(net, tape.constant(gather_rows(dataset, batch, true)));
                if (config.pretrain.use_fspfm) {
                    features = frontalize(net.params, "fspfm", features,
                                          tape.constant(gather_rows(dataset, batch, false)));
                }
                Var loss = arcface_loss(net.params, head, features, labels);
                loss_sum += loss.value()[0];
                tape.backward(loss);
            } catch (const Error& e) {
                if (e.error_class() == ErrorClass::numeric) rethrow_numeric(e, "pretrain", epoch, batches);
                throw;
            }
            optimizer.step(net.params, lr);
        }
        const double mean = loss_sum / static_cast<double>(batches);
        result.history.push_back(EpochStats{epoch, lr, mean, mean, 0.0});
    }

    result.checkpoint = start_checkpoint(1, config.pretrain.epochs, config);
    result.checkpoint.metadata.emplace_back("use_fspfm", config.pretrain.use_fspfm ? "1" : "0");
    result.checkpoint.metadata.emplace_back("frontal_only", config.pretrain.frontal_only ? "1" : "0");
    append_tensors(result.checkpoint, net.params);
    return result;
}

TwinNets clone_nets(const Checkpoint& stage1, const TrainConfig& config) {
    if (stage1.stage != 1) {
        fail(ErrorClass::contract, "clone_nets needs a stage-1 checkpoint, got stage " + std::to_string(stage1.stage));
    }
    config.validate();
    TwinNets nets;
    nets.fnet = init_net(config.dims, config.num_classes, config.seed);
    nets.pnet = init_net(config.dims, config.num_classes, config.seed);
    load_into(nets.fnet.params, stage1);
    load_into(nets.pnet.params, stage1);
    if (config.finetune.use_attention) {
        init_attention(nets.fnet.params, "attention", config.dims.feature_dim,
                       derive_seed(config.seed, kStreamAttention), config.finetune.attention_init_bias);
    }
    nets.fnet.params.set_all_frozen(true);
    nets.fnet.params.set_frozen_prefix("attention.", false);
    nets.pnet.params.set_all_frozen(true);
    nets.pnet.params.set_frozen_prefix("fspfm.", false);
    return nets;
}

TrainResult finetune(TwinNets& nets, const std::vector<Sample>& dataset, const PairSet& pairs,
                     const TrainConfig& config, const FinetuneEpochFn& on_epoch) {
    config.validate();
    if (pairs.kind != PairKind::finetune || pairs.pairs.empty()) {
        fail(ErrorClass::contract, "finetune needs a non-empty finetune pair set");
    }
    if (config.finetune.use_attention != nets.fnet.has_attention()) {
        fail(ErrorClass::contract, "F-Net attention layer does not match finetune.use_attention");
    }
    check_dims(nets.pnet, dataset);
    for (const auto& pr : pairs.pairs) {
        if (pr.a >= dataset.size() || pr.b >= dataset.size()) fail(ErrorClass::contract, "pair index out of range");
        if (dataset[pr.a].identity >= nets.pnet.num_classes) {
            fail(ErrorClass::contract, "finetune pair identity outside the recognition head");
        }
    }

    auto frozen_digest = [](const ParamStore& store) {
        io::ByteWriter w;
        for (const auto& e : store.entries()) {
            if (!e.frozen) continue;
            w.text(e.name);
            w.f64s(e.value.data());
        }
        return io::sha256_hex(w.bytes());
    };
    const std::string frozen_f = frozen_digest(nets.fnet.params);
    const std::string frozen_p = frozen_digest(nets.pnet.params);

    // The extractors (and F-Net's FSPFM) are frozen; their outputs per sample
    // are fixed for the whole stage, so compute them once.
    std::vector<std::size_t> frontal_idx, profile_idx;
    for (const auto& pr : pairs.pairs) {
        frontal_idx.push_back(pr.a);
        profile_idx.push_back(pr.b);
    }
    std::sort(frontal_idx.begin(), frontal_idx.end());
    frontal_idx.erase(std::unique(frontal_idx.begin(), frontal_idx.end()), frontal_idx.end());
    std::sort(profile_idx.begin(), profile_idx.end());
    profile_idx.erase(std::unique(profile_idx.begin(), profile_idx.end()), profile_idx.end());
    auto position = [](const std::vector<std::size_t>& sorted, std::size_t v) {
        return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
    };

    const Tensor frontal_features = extract_all(nets.fnet, dataset, frontal_idx);
    const Tensor frontal_targets = frontalize_all(nets.fnet, frontal_features, dataset, frontal_idx);
    const Tensor profile_features = extract_all(nets.pnet, dataset, profile_idx);

    const ArcFaceHead head = config.head();
    SgdOptimizer opt_f(config.finetune.momentum);
    SgdOptimizer opt_p(config.finetune.momentum);
    TrainResult result;
    const auto batch_size = static_cast<std::size_t>(config.finetune.batch_size);
    const std::size_t d = config.dims.feature_dim;
    const std::size_t p = config.dims.pose_dim;

    std::vector<std::size_t> order(pairs.size());
    for (int epoch = 0; epoch < config.finetune.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(config.seed, kStreamFinetuneShuffle, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        EpochStats stats{epoch, config.finetune.lr, 0.0, 0.0, 0.0};
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size, ++batches) {
            const std::size_t n = std::min(batch_size, order.size() - start);
            Tensor ff({n, d}), uf({n, d}), fp({n, d}), theta({n, p});
            std::vector<int> labels(n);
            for (std::size_t r = 0; r < n; ++r) {
                const SamplePair& pr = pairs.pairs[order[start + r]];
                const std::size_t fi = position(frontal_idx, pr.a);
                const std::size_t pi = position(profile_idx, pr.b);
                std::copy_n(frontal_features.row(fi).begin(), d, ff.row(r).begin());
                std::copy_n(frontal_targets.row(fi).begin(), d, uf.row(r).begin());
                std::copy_n(profile_features.row(pi).begin(), d, fp.row(r).begin());
                const auto& pose = dataset[pr.b].pose_feature;
                std::copy_n(pose.data().begin(), p, theta.row(r).begin());
                labels[r] = dataset[pr.b].identity;
            }
            try {
                Tape tape;
                Var v = frontalize(nets.pnet.params, "fspfm", tape.constant(std::move(fp)),
                                   tape.constant(std::move(theta)));
                Var u = tape.constant(std::move(uf));
                if (config.finetune.use_attention) {
                    u = hadamard(u, attention_weights(nets.fnet.params, "attention", tape.constant(std::move(ff))));
                }
                Var l_ada = ada_loss(u, v);
                Var l_arc = arcface_loss(nets.pnet.params, head, v, labels);
                Var loss = total_loss(l_arc, l_ada, config.finetune.lambda);
                stats.mean_total += loss.value()[0];
                stats.mean_arcface += l_arc.value()[0];
                stats.mean_ada += l_ada.value()[0];
                tape.backward(loss);
            } catch (const Error& e) {
                if (e.error_class() == ErrorClass::numeric) rethrow_numeric(e, "finetune", epoch, batches);
                throw;
            }
            opt_p.step(nets.pnet.params, config.finetune.lr);
            opt_f.step(nets.fnet.params, config.finetune.lr);
        }
        const auto nb = static_cast<double>(batches);
        stats.mean_total /= nb;
        stats.mean_arcface /= nb;
        stats.mean_ada /= nb;
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats, nets);
    }

    if (frozen_digest(nets.fnet.params) != frozen_f || frozen_digest(nets.pnet.params) != frozen_p) {
        fail(ErrorClass::contract, "frozen parameter changed during finetune");
    }

    result.checkpoint = start_checkpoint(2, config.finetune.epochs, config);
    result.checkpoint.metadata.emplace_back("use_attention", config.finetune.use_attention ? "1" : "0");
    append_tensors(result.checkpoint, nets.fnet.params, "fnet.");
    append_tensors(result.checkpoint, nets.pnet.params, "pnet.");
    return result;
}

Net target_net(const Checkpoint& ckpt, const TrainConfig& config) {
    Net net = init_net(config.dims, config.num_classes, config.seed);
    if (ckpt.stage == 1) {
        load_into(net.params, ckpt);
    } else if (ckpt.stage == 2) {
        load_into(net.params, ckpt, "pnet.");
    } else {
        fail(ErrorClass::format, "unknown checkpoint stage " + std::to_string(ckpt.stage));
    }
    net.params.set_all_frozen(true);
    return net;
}

std::string params_digest(const ParamStore& store, std::string_view prefix) {
    io::ByteWriter w;
    for (const auto& e : store.entries()) {
        if (!std::string_view(e.name).starts_with(prefix)) continue;
        w.text(e.name);
        w.f64s(e.value.data());
    }
    return io::sha256_hex(w.bytes());
}

}  // namespace fspfm
