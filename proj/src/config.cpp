#include "fspfm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "fspfm/error.hpp"
#include "fspfm/io.hpp"

namespace fspfm {

namespace {

struct RangeError {
    std::string what;
};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw RangeError{"'" + std::string(text) + "' is not a valid number"};
    return value;
}

double parse_real(std::string_view text, double lo, double hi, bool lo_open, bool hi_open) {
    const double v = parse_number<double>(text);
    const bool ok_lo = lo_open ? v > lo : v >= lo;
    const bool ok_hi = hi_open ? v < hi : v <= hi;
    if (!std::isfinite(v) || !ok_lo || !ok_hi) {
        std::ostringstream msg;
        msg << text << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
        throw RangeError{msg.str()};
    }
    return v;
}

long long parse_int(std::string_view text, long long lo, long long hi) {
    const auto v = parse_number<long long>(text);
    if (v < lo || v > hi) {
        throw RangeError{std::string(text) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
    }
    return v;
}

bool parse_bool(std::string_view text) {
    if (text == "1" || text == "true") return true;
    if (text == "0" || text == "false") return false;
    throw RangeError{"'" + std::string(text) + "' is not a boolean (use true/false)"};
}

std::vector<int> parse_int_list(std::string_view text) {
    std::vector<int> out;
    if (trim(text).empty() || trim(text) == "none") return out;
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item = trim(rest.substr(0, comma));
        out.push_back(static_cast<int>(parse_int(item, 1, 1'000'000)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

std::string join_ints(const std::vector<int>& values) {
    if (values.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr long long kMaxCount = 1'000'000'000;

struct Key {
    const char* name;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) { return io::format_double(v); }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"seed", [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>(v); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"lambda", [](RunConfig& c, std::string_view v) { c.train.finetune.lambda = parse_real(v, 0, kInf, false, true); },
         [](const RunConfig& c) { return fmt(c.train.finetune.lambda); }},
        {"batch", [](RunConfig& c, std::string_view v) { c.train.pretrain.batch_size = static_cast<int>(parse_int(v, 1, 1 << 20)); },
         [](const RunConfig& c) { return std::to_string(c.train.pretrain.batch_size); }},

        {"data.seed", [](RunConfig& c, std::string_view v) { c.data.seed = parse_number<std::uint64_t>(v); },
         [](const RunConfig& c) { return std::to_string(c.data.seed); }},
        {"data.train_identities", [](RunConfig& c, std::string_view v) { c.train_identities = static_cast<int>(parse_int(v, 2, kMaxCount)); },
         [](const RunConfig& c) { return std::to_string(c.train_identities); }},
        {"data.eval_identities", [](RunConfig& c, std::string_view v) { c.eval_identities = static_cast<int>(parse_int(v, 2, kMaxCount)); },
         [](const RunConfig& c) { return std::to_string(c.eval_identities); }},
        {"data.samples_per_identity", [](RunConfig& c, std::string_view v) { c.data.samples_per_identity = static_cast<int>(parse_int(v, 1, kMaxCount)); },
         [](const RunConfig& c) { return std::to_string(c.data.samples_per_identity); }},
        {"data.frontal_fraction", [](RunConfig& c, std::string_view v) { c.data.frontal_fraction = parse_real(v, 0, 1, true, true); },
         [](const RunConfig& c) { return fmt(c.data.frontal_fraction); }},
        {"data.observation_dim", [](RunConfig& c, std::string_view v) { c.data.observation_dim = static_cast<int>(parse_int(v, 6, 1 << 16)); },
         [](const RunConfig& c) { return std::to_string(c.data.observation_dim); }},
        {"data.pose_dim", [](RunConfig& c, std::string_view v) { c.data.pose_dim = static_cast<int>(parse_int(v, 1, 1 << 16)); },
         [](const RunConfig& c) { return std::to_string(c.data.pose_dim); }},
        {"data.noise_sigma", [](RunConfig& c, std::string_view v) { c.data.noise_sigma = parse_real(v, 0, kInf, false, true); },
         [](const RunConfig& c) { return fmt(c.data.noise_sigma); }},
        {"data.pose_sigma", [](RunConfig& c, std::string_view v) { c.data.pose_sigma = parse_real(v, 0, kInf, false, true); },
         [](const RunConfig& c) { return fmt(c.data.pose_sigma); }},
        {"data.occlusion", [](RunConfig& c, std::string_view v) { c.data.occlusion_strength = parse_real(v, 0, 1, false, false); },
         [](const RunConfig& c) { return fmt(c.data.occlusion_strength); }},

        {"model.hidden_dim", [](RunConfig& c, std::string_view v) { c.train.dims.hidden_dim = static_cast<std::size_t>(parse_int(v, 1, 1 << 16)); },
         [](const RunConfig& c) { return std::to_string(c.train.dims.hidden_dim); }},
        {"model.feature_dim", [](RunConfig& c, std::string_view v) { c.train.dims.feature_dim = static_cast<std::size_t>(parse_int(v, 1, 1 << 16)); },
         [](const RunConfig& c) { return std::to_string(c.train.dims.feature_dim); }},
        {"arcface.scale", [](RunConfig& c, std::string_view v) { c.train.arcface_scale = parse_real(v, 0, kInf, true, true); },
         [](const RunConfig& c) { return fmt(c.train.arcface_scale); }},
        {"arcface.margin", [](RunConfig& c, std::string_view v) { c.train.arcface_margin = parse_real(v, 0, std::numbers::pi / 2, false, true); },
         [](const RunConfig& c) { return fmt(c.train.arcface_margin); }},

        {"pretrain.epochs", [](RunConfig& c, std::string_view v) { c.train.pretrain.epochs = static_cast<int>(parse_int(v, 1, 1'000'000)); },
         [](const RunConfig& c) { return std::to_string(c.train.pretrain.epochs); }},
        {"pretrain.lr", [](RunConfig& c, std::string_view v) { c.train.pretrain.lr = parse_real(v, 0, kInf, true, true); },
         [](const RunConfig& c) { return fmt(c.train.pretrain.lr); }},
        {"pretrain.momentum", [](RunConfig& c, std::string_view v) { c.train.pretrain.momentum = parse_real(v, 0, 1, false, true); },
         [](const RunConfig& c) { return fmt(c.train.pretrain.momentum); }},
        {"pretrain.decay_epochs", [](RunConfig& c, std::string_view v) { c.train.pretrain.decay_epochs = parse_int_list(v); },
         [](const RunConfig& c) { return join_ints(c.train.pretrain.decay_epochs); }},
        {"pretrain.decay_factor", [](RunConfig& c, std::string_view v) { c.train.pretrain.decay_factor = parse_real(v, 0, 1, true, false); },
         [](const RunConfig& c) { return fmt(c.train.pretrain.decay_factor); }},

        {"finetune.epochs", [](RunConfig& c, std::string_view v) { c.train.finetune.epochs = static_cast<int>(parse_int(v, 1, 1'000'000)); },
         [](const RunConfig& c) { return std::to_string(c.train.finetune.epochs); }},
        {"finetune.batch", [](RunConfig& c, std::string_view v) { c.train.finetune.batch_size = static_cast<int>(parse_int(v, 1, 1 << 20)); },
         [](const RunConfig& c) { return std::to_string(c.train.finetune.batch_size); }},
        {"finetune.lr", [](RunConfig& c, std::string_view v) { c.train.finetune.lr = parse_real(v, 0, kInf, true, true); },
         [](const RunConfig& c) { return fmt(c.train.finetune.lr); }},
        {"finetune.momentum", [](RunConfig& c, std::string_view v) { c.train.finetune.momentum = parse_real(v, 0, 1, false, true); },
         [](const RunConfig& c) { return fmt(c.train.finetune.momentum); }},
        {"finetune.attention", [](RunConfig& c, std::string_view v) { c.train.finetune.use_attention = parse_bool(v); },
         [](const RunConfig& c) { return std::string(c.train.finetune.use_attention ? "true" : "false"); }},
        {"finetune.attention_init_bias", [](RunConfig& c, std::string_view v) { c.train.finetune.attention_init_bias = parse_real(v, -50, 50, false, false); },
         [](const RunConfig& c) { return fmt(c.train.finetune.attention_init_bias); }},
        {"finetune.min_angle", [](RunConfig& c, std::string_view v) { c.train.finetune.min_profile_angle = parse_real(v, Pose::kFrontalLimit, Pose::kAngleLimit, true, false); },
         [](const RunConfig& c) { return fmt(c.train.finetune.min_profile_angle); }},

        {"eval.pairs", [](RunConfig& c, std::string_view v) { c.eval.pairs = static_cast<std::size_t>(parse_int(v, 10, kMaxCount)); },
         [](const RunConfig& c) { return std::to_string(c.eval.pairs); }},
        {"eval.pair_seed", [](RunConfig& c, std::string_view v) { c.eval.pair_seed = parse_number<std::uint64_t>(v); },
         [](const RunConfig& c) { return std::to_string(c.eval.pair_seed); }},
    };
    return table;
}

const Key* find_key(std::string_view name) {
    for (const auto& k : keys()) {
        if (name == k.name) return &k;
    }
    return nullptr;
}

}  // namespace

void RunConfig::finalize() {
    data.num_identities = train_identities + eval_identities;
    train.num_classes = train_identities;
    train.dims.observation_dim = static_cast<std::size_t>(data.observation_dim);
    train.dims.pose_dim = static_cast<std::size_t>(data.pose_dim);
    data.validate();
    train.validate();
}

RunConfig parse_config_text(std::string_view text, std::string_view source) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    auto where = [&] { return std::string(source) + ":" + std::to_string(line_no) + ": "; };
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorClass::config, where() + "syntax error: expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail(ErrorClass::config, where() + "syntax error: empty key or value");
        if (key == "pretrain.lambda") {
            fail(ErrorClass::config, where() + "lambda weights the adaptation loss, which only exists in fine-tuning; "
                                               "the pre-training objective is ArcFace alone");
        }
        const Key* spec = find_key(key);
        if (!spec) fail(ErrorClass::config, where() + "unknown key '" + key + "'");
        if (!seen.insert(key).second) fail(ErrorClass::config, where() + "duplicate key '" + key + "'");
        try {
            spec->set(config, value);
        } catch (const RangeError& e) {
            fail(ErrorClass::config, where() + "range error for '" + key + "': " + e.what);
        }
    }
    try {
        config.finalize();
    } catch (const Error& e) {
        fail(ErrorClass::config, std::string(source) + ": " + e.what());
    }
    return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorClass::config, "config file '" + path.string() + "' not found");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str(), path.string());
}

std::string dump_config(const RunConfig& config) {
    std::string out;
    for (const auto& k : keys()) {
        out += k.name;
        out += " = ";
        out += k.get(config);
        out += "\n";
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& config) {
    RunConfig wrapper;
    wrapper.train = config;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : keys()) {
        const std::string_view name = k.name;
        if (name.starts_with("data.") || name.starts_with("eval.")) continue;
        out.emplace_back(k.name, k.get(wrapper));
    }
    out.emplace_back("model.observation_dim", std::to_string(config.dims.observation_dim));
    out.emplace_back("model.pose_dim", std::to_string(config.dims.pose_dim));
    out.emplace_back("model.num_classes", std::to_string(config.num_classes));
    out.emplace_back("pretrain.use_fspfm", config.pretrain.use_fspfm ? "true" : "false");
    out.emplace_back("pretrain.frontal_only", config.pretrain.frontal_only ? "true" : "false");
    return out;
}

std::string train_config_digest(const TrainConfig& config) {
    std::string text;
    for (const auto& [k, v] : train_config_entries(config)) text += k + " = " + v + "\n";
    return io::sha256_hex(std::string_view(text));
}

}  // namespace fspfm
