#include "covfuzz/error.hpp"

namespace covfuzz {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedHeader: return "malformed-header";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::WeightLengthMismatch: return "weight-length-mismatch";
    case ErrorCode::TruncatedWeights: return "truncated-weights";
    case ErrorCode::NonFiniteWeight: return "non-finite-weight";
    case ErrorCode::NoLayers: return "no-layers";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::UnknownArchitecture: return "unknown-architecture";
    case ErrorCode::EmptyProfilingSet: return "empty-profiling-set";
    case ErrorCode::StateMismatch: return "state-mismatch";
    case ErrorCode::RegionOutOfBounds: return "region-out-of-bounds";
    case ErrorCode::BadIdxMagic: return "bad-idx-magic";
    case ErrorCode::TruncatedPayload: return "truncated-payload";
    case ErrorCode::CountMismatch: return "count-mismatch";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
    case ErrorCode::Invariant: return "invariant";
    }
    return "unknown";
}

ErrorClass classify(ErrorCode code) {
    switch (code) {
    case ErrorCode::Config:
    case ErrorCode::UnknownArchitecture:
        return ErrorClass::Config;
    case ErrorCode::Invariant:
        return ErrorClass::Invariant;
    default:
        return ErrorClass::Data;
    }
}

}  // namespace covfuzz
