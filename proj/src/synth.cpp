#include "fspfm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "fspfm/error.hpp"
#include "fspfm/io.hpp"

namespace fspfm {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Streams for derive_seed; distinct constants keep the draws independent.
enum Stream : std::uint64_t {
    kStreamPlanes = 1,
    kStreamOcclusion = 2,
    kStreamPoseProjection = 3,
    kStreamLatent = 4,
    kStreamSample = 5,
    kStreamObservationNoise = 6,
    kStreamPoseNoise = 7,
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

void check_angle(double a, const char* name) {
    if (!(std::abs(a) <= Pose::kAngleLimit)) {
        fail(ErrorClass::contract, std::string(name) + " angle out of [-90,90]: " + std::to_string(a));
    }
}

}  // namespace

double Pose::max_abs() const {
    return std::max({std::abs(yaw), std::abs(pitch), std::abs(roll)});
}

bool Pose::is_profile_eligible(double min_angle) const {
    const double m = max_abs();
    return m >= min_angle && m <= kAngleLimit;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(base) ^ stream) + index);
}

void DatasetSpec::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorClass::config, "dataset spec: " + what); };
    if (num_identities < 1) bad("num_identities must be positive");
    if (samples_per_identity < 1) bad("samples_per_identity must be positive");
    if (!(frontal_fraction > 0.0 && frontal_fraction < 1.0)) bad("frontal_fraction must lie in (0,1)");
    if (observation_dim < 6) bad("observation_dim must be at least 6");
    if (pose_dim < 1) bad("pose_dim must be positive");
    if (!(noise_sigma >= 0.0)) bad("noise_sigma must be non-negative");
    if (!(pose_sigma >= 0.0)) bad("pose_sigma must be non-negative");
    if (!(occlusion_strength >= 0.0 && occlusion_strength <= 1.0)) bad("occlusion_strength must lie in [0,1]");
}

SyntheticWorld::SyntheticWorld(const DatasetSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto dim = static_cast<std::size_t>(spec_.observation_dim);

    // Partition coordinates into disjoint pairs; each angle owns a third of them.
    const auto perm = seeded_permutation(dim, derive_seed(spec_.seed, kStreamPlanes));
    const std::size_t per_angle = dim / 6;
    for (std::size_t angle = 0; angle < 3; ++angle) {
        for (std::size_t k = 0; k < per_angle; ++k) {
            const std::size_t base = 2 * (angle * per_angle + k);
            planes_[angle].emplace_back(perm[base], perm[base + 1]);
        }
    }

    occlusion_order_ = seeded_permutation(dim, derive_seed(spec_.seed, kStreamOcclusion));

    const auto p = static_cast<std::size_t>(spec_.pose_dim);
    pose_projection_ = Tensor({p, 3});
    std::mt19937_64 rng(derive_seed(spec_.seed, kStreamPoseProjection));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : pose_projection_.data()) v = normal(rng);
}

Tensor SyntheticWorld::identity_latent(int k) const {
    if (k < 0) fail(ErrorClass::contract, "negative identity");
    std::mt19937_64 rng(derive_seed(spec_.seed, kStreamLatent, static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z({static_cast<std::size_t>(spec_.observation_dim)});
    double norm = 0.0;
    do {
        for (auto& v : z.data()) v = normal(rng);
        norm = l2_norm(z.data());
    } while (norm == 0.0);
    for (auto& v : z.data()) v /= norm;
    return z;
}

Tensor SyntheticWorld::rotate(const Tensor& z, const Pose& pose) const {
    const std::array<double, 3> angles{pose.yaw, pose.pitch, pose.roll};
    Tensor out = z;
    for (std::size_t a = 0; a < 3; ++a) {
        const double c = std::cos(angles[a] * kDegToRad);
        const double s = std::sin(angles[a] * kDegToRad);
        for (auto [i, j] : planes_[a]) {
            const double zi = z[i], zj = z[j];
            out[i] = c * zi - s * zj;
            out[j] = s * zi + c * zj;
        }
    }
    return out;
}

std::vector<std::size_t> SyntheticWorld::occluded_coordinates(const Pose& pose) const {
    const double raw = spec_.occlusion_strength * spec_.observation_dim *
                       std::sin(std::abs(pose.yaw) * kDegToRad);
    auto count = static_cast<std::size_t>(std::ceil(raw - 1e-12));
    count = std::min(count, occlusion_order_.size());
    return {occlusion_order_.begin(), occlusion_order_.begin() + static_cast<std::ptrdiff_t>(count)};
}

Tensor SyntheticWorld::observe(const Tensor& z, const Pose& pose, std::uint64_t noise_seed) const {
    return observe(z, pose, noise_seed, spec_.noise_sigma);
}

Tensor SyntheticWorld::observe(const Tensor& z, const Pose& pose, std::uint64_t noise_seed,
                               double noise_sigma) const {
    if (z.rank() != 1 || z.size() != static_cast<std::size_t>(spec_.observation_dim)) {
        fail(ErrorClass::shape, "observe: latent has shape " + shape_string(z.shape()));
    }
    if (std::abs(l2_norm(z.data()) - 1.0) > 1e-9) {
        fail(ErrorClass::contract, "observe: latent must have unit norm");
    }
    check_angle(pose.yaw, "yaw");
    check_angle(pose.pitch, "pitch");
    check_angle(pose.roll, "roll");

    Tensor out = rotate(z, pose);
    for (auto idx : occluded_coordinates(pose)) out[idx] = 0.0;
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(noise_seed);
        std::normal_distribution<double> normal(0.0, noise_sigma);
        for (auto& v : out.data()) v += normal(rng);
    }
    return out;
}

PoseEmbedding SyntheticWorld::pose_embed(const Pose& pose, std::uint64_t seed) const {
    return pose_embed(pose, seed, spec_.pose_sigma);
}

PoseEmbedding SyntheticWorld::pose_embed(const Pose& pose, std::uint64_t seed,
                                         double pose_sigma) const {
    check_angle(pose.yaw, "yaw");
    check_angle(pose.pitch, "pitch");
    check_angle(pose.roll, "roll");
    const std::array<double, 3> normalized{pose.yaw / Pose::kAngleLimit, pose.pitch / Pose::kAngleLimit,
                                           pose.roll / Pose::kAngleLimit};
    const std::size_t p = pose_projection_.dim(0);
    Tensor feature({p});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < p; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 3; ++k) acc += pose_projection_.at(i, k) * normalized[k];
        feature[i] = std::tanh(acc);
        if (pose_sigma > 0.0) feature[i] += pose_sigma * normal(rng);
    }
    return PoseEmbedding{pose, std::move(feature)};
}

std::vector<Sample> make_dataset(const DatasetSpec& spec) {
    SyntheticWorld world(spec);
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(spec.num_identities) * spec.samples_per_identity);
    std::uint64_t index = 0;
    for (int k = 0; k < spec.num_identities; ++k) {
        const Tensor z = world.identity_latent(k);
        for (int s = 0; s < spec.samples_per_identity; ++s, ++index) {
            std::mt19937_64 rng(derive_seed(spec.seed, kStreamSample, index));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            Pose pose;
            if (unit(rng) < spec.frontal_fraction) {
                std::uniform_real_distribution<double> small(-Pose::kFrontalLimit, Pose::kFrontalLimit);
                pose = Pose{small(rng), small(rng), small(rng)};
            } else {
                std::uniform_real_distribution<double> large(Pose::kFrontalLimit, Pose::kAngleLimit);
                auto draw = [&] {
                    const double magnitude = large(rng);
                    return unit(rng) < 0.5 ? -magnitude : magnitude;
                };
                pose = Pose{draw(), draw(), draw()};
            }
            Sample sample;
            sample.identity = k;
            sample.pose = pose;
            sample.observation =
                world.observe(z, pose, derive_seed(spec.seed, kStreamObservationNoise, index));
            sample.pose_feature =
                world.pose_embed(pose, derive_seed(spec.seed, kStreamPoseNoise, index)).feature;
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

std::vector<Sample> select_identities(const std::vector<Sample>& samples, int first, int last) {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.identity >= first && s.identity < last) out.push_back(s);
    }
    return out;
}

std::string split_name(VerificationSplit split) {
    return split == VerificationSplit::frontal_frontal ? "frontal-frontal" : "cross-pose";
}

PairSet make_finetune_pairs(const std::vector<Sample>& dataset, double min_angle) {
    PairSet set;
    set.kind = PairKind::finetune;
    int max_id = -1;
    for (const auto& s : dataset) max_id = std::max(max_id, s.identity);
    std::vector<std::vector<std::size_t>> frontal(static_cast<std::size_t>(max_id + 1));
    std::vector<std::vector<std::size_t>> profile(static_cast<std::size_t>(max_id + 1));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& s = dataset[i];
        if (s.pose.is_frontal()) {
            frontal[static_cast<std::size_t>(s.identity)].push_back(i);
        } else if (s.pose.is_profile_eligible(min_angle)) {
            profile[static_cast<std::size_t>(s.identity)].push_back(i);
        }
    }
    for (std::size_t k = 0; k < frontal.size(); ++k) {
        for (auto f : frontal[k]) {
            for (auto p : profile[k]) set.pairs.push_back(SamplePair{f, p, true});
        }
    }
    if (set.pairs.empty()) {
        fail(ErrorClass::no_eligible_pairs,
             "no eligible pairs: need a frontal and a profile (>= " + io::format_double(min_angle) +
                 " deg) sample of the same identity");
    }
    return set;
}

PairSet make_verification_pairs(const std::vector<Sample>& dataset, VerificationSplit split,
                                std::size_t n_pairs, std::uint64_t seed) {
    std::set<int> identities;
    for (const auto& s : dataset) identities.insert(s.identity);
    if (identities.size() < 2) {
        fail(ErrorClass::contract, "verification pairs need at least two identities");
    }

    std::vector<std::size_t> left, right;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& pose = dataset[i].pose;
        if (pose.is_frontal()) left.push_back(i);
        if (split == VerificationSplit::cross_pose ? pose.is_profile_eligible() : pose.is_frontal()) {
            right.push_back(i);
        }
    }
    // Frontal-frontal pairs are unordered; store them with a < b.
    auto canonical = [&](std::size_t a, std::size_t b) {
        if (split == VerificationSplit::frontal_frontal && b < a) std::swap(a, b);
        return std::pair{a, b};
    };

    std::vector<std::pair<std::size_t, std::size_t>> genuine_pool;
    std::size_t impostor_capacity = 0;
    for (auto a : left) {
        for (auto b : right) {
            if (a == b) continue;
            if (split == VerificationSplit::frontal_frontal && b < a) continue;
            if (dataset[a].identity == dataset[b].identity) {
                genuine_pool.emplace_back(a, b);
            } else {
                ++impostor_capacity;
            }
        }
    }

    const std::size_t n_genuine = n_pairs / 2;
    const std::size_t n_impostor = n_pairs - n_genuine;
    if (genuine_pool.size() < n_genuine || impostor_capacity < n_impostor) {
        fail(ErrorClass::contract, "insufficient eligible samples for " + std::to_string(n_pairs) + " " +
                                       split_name(split) + " pairs");
    }

    std::mt19937_64 rng(seed);
    std::shuffle(genuine_pool.begin(), genuine_pool.end(), rng);

    PairSet set;
    set.kind = PairKind::verification;
    for (std::size_t i = 0; i < n_genuine; ++i) {
        set.pairs.push_back(SamplePair{genuine_pool[i].first, genuine_pool[i].second, true});
    }

    std::set<std::pair<std::size_t, std::size_t>> used;
    std::uniform_int_distribution<std::size_t> pick_left(0, left.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_right(0, right.size() - 1);
    while (used.size() < n_impostor) {
        const std::size_t a = left[pick_left(rng)];
        const std::size_t b = right[pick_right(rng)];
        if (a == b || dataset[a].identity == dataset[b].identity) continue;
        auto key = canonical(a, b);
        if (used.insert(key).second) set.pairs.push_back(SamplePair{key.first, key.second, false});
    }
    std::shuffle(set.pairs.begin(), set.pairs.end(), rng);
    return set;
}

namespace {

constexpr std::string_view kDatasetMagic = "FSPFM-DATA";
constexpr int kDatasetVersion = 1;

}  // namespace

void save_dataset(const std::vector<Sample>& samples, const DatasetSpec& spec,
                  const std::filesystem::path& path) {
    io::TextHeader header;
    header.magic = std::string(kDatasetMagic);
    header.set("version", std::to_string(kDatasetVersion));
    header.set("observation_dim", std::to_string(spec.observation_dim));
    header.set("pose_dim", std::to_string(spec.pose_dim));
    header.set("samples", std::to_string(samples.size()));
    header.set("identities", std::to_string(spec.num_identities));
    header.set("spec.samples_per_identity", std::to_string(spec.samples_per_identity));
    header.set("spec.frontal_fraction", io::format_double(spec.frontal_fraction));
    header.set("spec.noise_sigma", io::format_double(spec.noise_sigma));
    header.set("spec.pose_sigma", io::format_double(spec.pose_sigma));
    header.set("spec.occlusion_strength", io::format_double(spec.occlusion_strength));
    header.set("spec.seed", std::to_string(spec.seed));

    io::ByteWriter out;
    header.write(out);
    const auto d = static_cast<std::size_t>(spec.observation_dim);
    const auto p = static_cast<std::size_t>(spec.pose_dim);
    for (const auto& s : samples) {
        if (s.observation.size() != d || s.pose_feature.size() != p) {
            fail(ErrorClass::shape, "save_dataset: sample dimensions disagree with spec");
        }
        out.f64(static_cast<double>(s.identity));
        out.f64(s.pose.yaw);
        out.f64(s.pose.pitch);
        out.f64(s.pose.roll);
        out.f64s(s.observation.data());
        out.f64s(s.pose_feature.data());
    }
    io::write_file_atomic(path, out.bytes());
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
    io::ByteReader in(io::read_file(path));
    const auto header = io::TextHeader::read(in, kDatasetMagic);
    if (header.get("version") != std::to_string(kDatasetVersion)) {
        fail(ErrorClass::version, "dataset version " + header.get("version") + " unsupported");
    }
    LoadedDataset loaded;
    auto& spec = loaded.spec;
    try {
        spec.observation_dim = std::stoi(header.get("observation_dim"));
        spec.pose_dim = std::stoi(header.get("pose_dim"));
        spec.num_identities = std::stoi(header.get("identities"));
        spec.samples_per_identity = std::stoi(header.get("spec.samples_per_identity"));
        spec.frontal_fraction = std::stod(header.get("spec.frontal_fraction"));
        spec.noise_sigma = std::stod(header.get("spec.noise_sigma"));
        spec.pose_sigma = std::stod(header.get("spec.pose_sigma"));
        spec.occlusion_strength = std::stod(header.get("spec.occlusion_strength"));
        spec.seed = std::stoull(header.get("spec.seed"));
    } catch (const std::logic_error&) {
        fail(ErrorClass::format, "dataset header has a malformed numeric field");
    }
    const auto count = std::stoull(header.get("samples"));
    const auto d = static_cast<std::size_t>(spec.observation_dim);
    const auto p = static_cast<std::size_t>(spec.pose_dim);
    loaded.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.identity = static_cast<int>(in.f64());
        s.pose.yaw = in.f64();
        s.pose.pitch = in.f64();
        s.pose.roll = in.f64();
        s.observation = Tensor({d});
        in.f64s(s.observation.data());
        s.pose_feature = Tensor({p});
        in.f64s(s.pose_feature.data());
        loaded.samples.push_back(std::move(s));
    }
    if (!in.at_end()) fail(ErrorClass::format, "trailing bytes after dataset records");
    return loaded;
}

}  // namespace fspfm
