#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fspfm/param_store.hpp"
#include "fspfm/tensor.hpp"

namespace fspfm {

/// Named parameter tensors plus run metadata.
///
/// File layout: a text header
///
///     FSPFM-CKPT
///     version 1
///     stage <1|2>
///     epoch <n>
///     seed <n>
///     config_digest <sha256 of the config dump>
///     tensors <count>
///     <metadata key> <value>        (zero or more)
///     end
///
/// followed by `count` records of: u32 name length, name bytes, u32 rank,
/// u64 extents[rank], then the values as little-endian IEEE-754 doubles.
struct Checkpoint {
    static constexpr std::string_view kMagic = "FSPFM-CKPT";
    static constexpr int kVersion = 1;

    int stage = 1;
    int epoch = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(std::string_view name) const;
    bool has_tensor(std::string_view name) const;
    /// Empty string if absent.
    std::string meta(std::string_view key) const;
};

/// Appends every entry of `store` as `<prefix><name>`.
void append_tensors(Checkpoint& ckpt, const ParamStore& store, std::string_view prefix = "");

/// Copies tensors named `<prefix><name>` into the matching store entries.
/// Every store entry must be present with the same shape, and every
/// checkpoint tensor under `prefix` must map to a store entry.
void load_into(ParamStore& store, const Checkpoint& ckpt, std::string_view prefix = "");

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::vector<char> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fspfm
