#pragma once

#include <stdexcept>
#include <string>

namespace arapgs {

enum class ErrorCode {
    Io,
    Format,
    Schema,
    Data,
    Config,
    EmptySelection,
    ConflictingConstraint,
    Solver,
    Enhancer,
    ShapeMismatch,
    Internal,
};

const char* to_string(ErrorCode code) noexcept;

/// Base exception for everything the library throws on purpose. The code
/// survives the trip across the C API boundary.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Data: return "data";
    case ErrorCode::Config: return "config";
    case ErrorCode::EmptySelection: return "empty_selection";
    case ErrorCode::ConflictingConstraint: return "conflicting_constraint";
    case ErrorCode::Solver: return "solver";
    case ErrorCode::Enhancer: return "enhancer";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

} // namespace arapgs
