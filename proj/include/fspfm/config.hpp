#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fspfm/synth.hpp"
#include "fspfm/training.hpp"

namespace fspfm {

struct EvalConfig {
    std::size_t pairs = 4000;
    std::uint64_t pair_seed = 7;
};

/// Everything a run needs. Identities [0, train_identities) train the model;
/// the following eval_identities are held out for verification.
struct RunConfig {
    DatasetSpec data;
    int train_identities = 200;
    int eval_identities = 40;
    TrainConfig train;
    EvalConfig eval;

    /// Propagates derived values (identity count, dims, class count) and
    /// validates ranges.
    void finalize();
};

/// Line-oriented `key = value` text; `#` starts a comment. Unknown keys,
/// malformed lines and out-of-range values are `config` errors whose
/// message carries `<source>:<line>`.
RunConfig parse_config_text(std::string_view text, std::string_view source = "<config>");
RunConfig parse_config(const std::filesystem::path& path);

/// Canonical dump; parse_config_text(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& config);

/// Key/value snapshot of the training-relevant settings, stored in checkpoints.
std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& config);
std::string train_config_digest(const TrainConfig& config);

}  // namespace fspfm
