#include "fspfm/param_store.hpp"

#include <cstring>

#include "fspfm/error.hpp"

namespace fspfm {

ParamEntry& ParamStore::add(std::string name, Tensor value, bool frozen) {
    if (index_.contains(name)) fail(ErrorClass::config, "duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    Tensor grad(value.shape());
    entries_.push_back(ParamEntry{std::move(name), std::move(value), std::move(grad), frozen});
    return entries_.back();
}

bool ParamStore::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

std::size_t ParamStore::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) fail(ErrorClass::config, "missing parameter '" + std::string(name) + "'");
    return it->second;
}

ParamEntry& ParamStore::entry(std::string_view name) { return entries_[index_of(name)]; }

const ParamEntry& ParamStore::entry(std::string_view name) const {
    return entries_[index_of(name)];
}

void ParamStore::set_frozen_prefix(std::string_view prefix, bool frozen) {
    for (auto& e : entries_) {
        if (std::string_view(e.name).starts_with(prefix)) e.frozen = frozen;
    }
}

void ParamStore::set_all_frozen(bool frozen) {
    for (auto& e : entries_) e.frozen = frozen;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
        if (!e.frozen) out.push_back(e.name);
    }
    return out;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

bool bitwise_equal(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.entries()[i];
        const auto& y = b.entries()[i];
        if (x.name != y.name || x.value.shape() != y.value.shape()) return false;
        if (std::memcmp(x.value.data().data(), y.value.data().data(),
                        x.value.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace fspfm
