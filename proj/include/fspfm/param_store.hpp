#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fspfm/tensor.hpp"

namespace fspfm {

struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;
};

/// Named parameters in insertion order. Every entry owns a gradient
/// accumulator of the same shape; frozen entries never receive gradient.
class ParamStore {
public:
    ParamEntry& add(std::string name, Tensor value, bool frozen = false);

    bool contains(std::string_view name) const;
    ParamEntry& entry(std::string_view name);
    const ParamEntry& entry(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    Tensor& value(std::string_view name) { return entry(name).value; }
    const Tensor& value(std::string_view name) const { return entry(name).value; }

    std::vector<ParamEntry>& entries() noexcept { return entries_; }
    const std::vector<ParamEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Sets `frozen` on every entry whose name starts with `prefix`.
    void set_frozen_prefix(std::string_view prefix, bool frozen);
    void set_all_frozen(bool frozen);
    std::vector<std::string> trainable_names() const;

    void zero_grad();

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// True when both stores hold the same names, shapes and bit-identical values.
bool bitwise_equal(const ParamStore& a, const ParamStore& b);

}  // namespace fspfm
