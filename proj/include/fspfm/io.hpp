#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fspfm::io {

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    void text(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void f64s(std::span<const double> values);

    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

/// Cursor over an in-memory file. Reading past the end throws a `truncated` error.
class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    void f64s(std::span<double> out);
    std::string bytes(std::size_t n);
    /// Reads up to and excluding the next '\n'; throws if none remains.
    std::string line();

    bool at_end() const noexcept { return pos_ == bytes_.size(); }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const;

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

/// Ordered "key value" header lines, closed by a line reading "end".
struct TextHeader {
    std::string magic;
    std::vector<std::pair<std::string, std::string>> fields;

    void set(std::string key, std::string value);
    const std::string& get(std::string_view key) const;
    bool has(std::string_view key) const;

    void write(ByteWriter& out) const;
    /// Reads the magic line and fields. A magic mismatch is a `format` error.
    static TextHeader read(ByteReader& in, std::string_view expected_magic);
};

std::vector<char> read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string sha256_hex(std::span<const char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace fspfm::io
