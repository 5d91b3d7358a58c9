#include "fspfm/checkpoint.hpp"

#include <set>

#include "fspfm/error.hpp"
#include "fspfm/io.hpp"

namespace fspfm {

const Tensor& Checkpoint::tensor(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    fail(ErrorClass::name_mismatch, "checkpoint has no tensor '" + std::string(name) + "'");
}

bool Checkpoint::has_tensor(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return true;
    }
    return false;
}

std::string Checkpoint::meta(std::string_view key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) return v;
    }
    return {};
}

void append_tensors(Checkpoint& ckpt, const ParamStore& store, std::string_view prefix) {
    for (const auto& e : store.entries()) {
        ckpt.tensors.emplace_back(std::string(prefix) + e.name, e.value);
    }
}

void load_into(ParamStore& store, const Checkpoint& ckpt, std::string_view prefix) {
    std::set<std::string> expected;
    for (auto& e : store.entries()) {
        const std::string full = std::string(prefix) + e.name;
        expected.insert(full);
        if (!ckpt.has_tensor(full)) {
            fail(ErrorClass::name_mismatch, "checkpoint is missing tensor '" + full + "'");
        }
        const Tensor& t = ckpt.tensor(full);
        if (t.shape() != e.value.shape()) {
            fail(ErrorClass::shape, "tensor '" + full + "' has shape " + shape_string(t.shape()) +
                                        " but the model expects " + shape_string(e.value.shape()));
        }
        e.value = t;
        e.grad.fill(0.0);
    }
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.starts_with(prefix) && !expected.contains(name)) {
            fail(ErrorClass::name_mismatch, "checkpoint tensor '" + name + "' matches no model parameter");
        }
    }
}

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
    io::TextHeader header;
    header.magic = std::string(Checkpoint::kMagic);
    header.set("version", std::to_string(Checkpoint::kVersion));
    header.set("stage", std::to_string(ckpt.stage));
    header.set("epoch", std::to_string(ckpt.epoch));
    header.set("seed", std::to_string(ckpt.seed));
    header.set("config_digest", ckpt.config_digest.empty() ? "-" : ckpt.config_digest);
    header.set("tensors", std::to_string(ckpt.tensors.size()));
    for (const auto& [k, v] : ckpt.metadata) {
        if (k.find(' ') != std::string::npos || v.find('\n') != std::string::npos) {
            fail(ErrorClass::format, "metadata '" + k + "' cannot be stored in a header line");
        }
        header.fields.emplace_back(k, v.empty() ? "-" : v);
    }

    io::ByteWriter out;
    header.write(out);
    for (const auto& [name, t] : ckpt.tensors) {
        out.u32(static_cast<std::uint32_t>(name.size()));
        out.text(name);
        out.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto extent : t.shape()) out.u64(extent);
        out.f64s(t.data());
    }
    return out.bytes();
}

Checkpoint deserialize_checkpoint(std::vector<char> bytes) {
    io::ByteReader in(std::move(bytes));
    const auto header = io::TextHeader::read(in, Checkpoint::kMagic);
    if (header.get("version") != std::to_string(Checkpoint::kVersion)) {
        fail(ErrorClass::version, "checkpoint version " + header.get("version") + " unsupported (expected " +
                                      std::to_string(Checkpoint::kVersion) + ")");
    }
    Checkpoint ckpt;
    std::size_t count = 0;
    try {
        ckpt.stage = std::stoi(header.get("stage"));
        ckpt.epoch = std::stoi(header.get("epoch"));
        ckpt.seed = std::stoull(header.get("seed"));
        count = std::stoull(header.get("tensors"));
    } catch (const std::logic_error&) {
        fail(ErrorClass::format, "checkpoint header has a malformed numeric field");
    }
    ckpt.config_digest = header.get("config_digest");
    if (ckpt.config_digest == "-") ckpt.config_digest.clear();
    static const std::set<std::string> reserved{"version", "stage", "epoch", "seed", "config_digest", "tensors"};
    for (const auto& [k, v] : header.fields) {
        if (!reserved.contains(k)) ckpt.metadata.emplace_back(k, v == "-" ? std::string() : v);
    }

    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = in.u32();
        std::string name = in.bytes(name_len);
        const std::uint32_t rank = in.u32();
        if (rank == 0 || rank > 8) fail(ErrorClass::format, "tensor '" + name + "' has invalid rank");
        Shape shape(rank);
        for (auto& extent : shape) extent = in.u64();
        const std::size_t n = shape_size(shape);
        if (n > in.remaining() / sizeof(double)) {
            fail(ErrorClass::truncated, "checkpoint truncated inside tensor '" + name + "'");
        }
        Tensor t(shape);
        in.f64s(t.data());
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!in.at_end()) fail(ErrorClass::format, "trailing bytes after checkpoint tensors");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(io::read_file(path));
}

}  // namespace fspfm
