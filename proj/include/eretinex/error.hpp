#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eretinex {

enum class ErrorCode {
    EmptyStream,
    EventOutOfBounds,
    InvalidPolarity,
    UnsortedTimestamps,
    BadMagic,
    Truncated,
    ShapeMismatch,
    NonFinite,
    InvalidArgument,
    MissingParameter,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Base of every error thrown by the library. The code is stable and
// machine-readable; what() carries the human-readable detail.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

// Raised by the binary/text readers. Carries the byte offset (or line
// number for text formats) where decoding failed.
class ParseError : public Error {
  public:
    ParseError(ErrorCode code, std::size_t offset, const std::string& message)
        : Error(code, message + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

}  // namespace eretinex
