#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adapt {

enum class ErrorCode {
    ConfigError,
    DimensionMismatch,
    ClassIndexOutOfRange,
    SingularMatrix,
    DegenerateInput,
    EmptyStream,
    BadMagic,
    VersionMismatch,
    TruncatedFile,
    SizeMismatch,
    NonFiniteValue,
    ZeroNormRow,
    MissingFile,
    JsonError,
    SeparationInfeasible,
    NoLabeledSamples,
    OrderingRequiresOnline,
    InvalidPrototypes,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ClassIndexOutOfRange: return "ClassIndexOutOfRange";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::JsonError: return "JsonError";
    case ErrorCode::SeparationInfeasible: return "SeparationInfeasible";
    case ErrorCode::NoLabeledSamples: return "NoLabeledSamples";
    case ErrorCode::OrderingRequiresOnline: return "OrderingRequiresOnline";
    case ErrorCode::InvalidPrototypes: return "InvalidPrototypes";
    }
    return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace adapt
