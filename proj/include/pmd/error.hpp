#pragma once

#include <stdexcept>
#include <string>

namespace pmd {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    InvalidFrequency,
    EmptyField,
    NoValidPixels,
    InsufficientFeatures,
    RegistrationFailure,
    FormatError,
    IoError,
    NotFound,
    Conflict,
};

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

} // namespace pmd
