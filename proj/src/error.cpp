#include "eretinex/error.hpp"

namespace eretinex {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::EventOutOfBounds: return "EventOutOfBounds";
        case ErrorCode::InvalidPolarity: return "InvalidPolarity";
        case ErrorCode::UnsortedTimestamps: return "UnsortedTimestamps";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingParameter: return "MissingParameter";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace eretinex
