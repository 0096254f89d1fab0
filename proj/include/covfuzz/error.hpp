#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covfuzz {

enum class ErrorCode {
    // model container / shapes
    MalformedHeader,
    DimensionMismatch,
    WeightLengthMismatch,
    TruncatedWeights,
    NonFiniteWeight,
    NoLayers,
    ShapeMismatch,
    UnknownArchitecture,
    // coverage
    EmptyProfilingSet,
    StateMismatch,
    // mutation
    RegionOutOfBounds,
    // datasets
    BadIdxMagic,
    TruncatedPayload,
    CountMismatch,
    // plumbing
    Io,
    Config,
    Invariant,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Coarse grouping used by the CLI for its exit status.
enum class ErrorClass { Config, Data, Invariant };

ErrorClass classify(ErrorCode code);

}  // namespace covfuzz
