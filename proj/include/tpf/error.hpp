#pragma once

#include <stdexcept>
#include <string>

namespace tpf {

enum class ErrorCode {
    InvalidPolygon,
    LabelNotFound,
    ShapeMismatch,
    NoValidInstances,
    EmptyMask,
    PointOutOfBounds,
    InvalidMatrix,
    InvalidAssignment,
    NonFiniteLoss,
    NonFiniteParams,
    PlacementFailed,
    IoError,
    ParseError,
    InvalidArgument,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (tests, the CLI) can dispatch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class NonFiniteLossError : public Error {
public:
    NonFiniteLossError(long iteration, const std::string& what)
        : Error(ErrorCode::NonFiniteLoss, what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}

    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::LabelNotFound: return "LabelNotFound";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoValidInstances: return "NoValidInstances";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::PointOutOfBounds: return "PointOutOfBounds";
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::InvalidAssignment: return "InvalidAssignment";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteParams: return "NonFiniteParams";
    case ErrorCode::PlacementFailed: return "PlacementFailed";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace tpf
