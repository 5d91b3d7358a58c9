#include "fspfm/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <memory>

#include "fspfm/error.hpp"

namespace fspfm::io {

namespace {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
void put(std::vector<char>& out, T v) {
    v = to_little(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put(bytes_, v); }
void ByteWriter::u64(std::uint64_t v) { put(bytes_, v); }
void ByteWriter::f64(double v) { put(bytes_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> values) {
    bytes_.reserve(bytes_.size() + values.size() * sizeof(double));
    for (double v : values) f64(v);
}

void ByteReader::need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
        fail(ErrorClass::truncated, "file truncated: needed " + std::to_string(n) +
                                        " more bytes at offset " + std::to_string(pos_));
    }
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return to_little(v);
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return to_little(v);
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::f64s(std::span<double> out) {
    need(out.size() * sizeof(double));
    for (auto& v : out) v = f64();
}

std::string ByteReader::bytes(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
}

std::string ByteReader::line() {
    const auto begin = bytes_.begin() + static_cast<std::ptrdiff_t>(pos_);
    const auto nl = std::find(begin, bytes_.end(), '\n');
    if (nl == bytes_.end()) fail(ErrorClass::truncated, "file truncated inside text header");
    std::string s(begin, nl);
    pos_ = static_cast<std::size_t>(nl - bytes_.begin()) + 1;
    return s;
}

void TextHeader::set(std::string key, std::string value) {
    for (auto& [k, v] : fields) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    fields.emplace_back(std::move(key), std::move(value));
}

bool TextHeader::has(std::string_view key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return true;
    }
    return false;
}

const std::string& TextHeader::get(std::string_view key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return v;
    }
    fail(ErrorClass::format, "header field '" + std::string(key) + "' missing");
}

void TextHeader::write(ByteWriter& out) const {
    out.text(magic);
    out.text("\n");
    for (const auto& [k, v] : fields) {
        out.text(k);
        out.text(" ");
        out.text(v);
        out.text("\n");
    }
    out.text("end\n");
}

TextHeader TextHeader::read(ByteReader& in, std::string_view expected_magic) {
    TextHeader header;
    // A foreign file may have no newline at all; report that as a format problem.
    try {
        header.magic = in.line();
    } catch (const Error&) {
        fail(ErrorClass::format, "bad magic: expected '" + std::string(expected_magic) + "'");
    }
    if (header.magic != expected_magic) {
        fail(ErrorClass::format, "bad magic: expected '" + std::string(expected_magic) + "'");
    }
    for (;;) {
        std::string line = in.line();
        if (line == "end") break;
        const auto space = line.find(' ');
        if (space == std::string::npos) fail(ErrorClass::format, "malformed header line '" + line + "'");
        header.fields.emplace_back(line.substr(0, space), line.substr(space + 1));
    }
    return header;
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorClass::io, "cannot open '" + path.string() + "'");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorClass::io, "cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorClass::io, "short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

std::string sha256_hex(std::span<const char> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        fail(ErrorClass::io, "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span<const char>(text.data(), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace fspfm::io
