#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fspfm {

/// Coarse failure categories. The CLI prints `error: <class>: <message>`
/// so that drivers can branch on the class without parsing prose.
enum class ErrorClass {
    config,
    shape,
    contract,
    numeric,
    format,
    version,
    truncated,
    name_mismatch,
    no_eligible_pairs,
    dependency,
    io,
    /// An output already exists and overwriting was not requested.
    exists,
};

std::string_view error_class_name(ErrorClass cls) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& message)
        : std::runtime_error(message), cls_(cls) {}

    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

[[noreturn]] inline void fail(ErrorClass cls, const std::string& message) {
    throw Error(cls, message);
}

}  // namespace fspfm
