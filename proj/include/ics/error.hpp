#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ics {

enum class ErrorCode {
  // core
  EmptyInitial,
  OverCapacity,
  DimMismatch,
  InvalidValue,
  // volume-io
  UnsupportedDatatype,
  BadMagic,
  TruncatedFile,
  IoFailure,
  InvalidVolume,
  ShapeMismatch,
  // segmenter
  EmptySupport,
  // bridge
  SpawnFailure,
  HandshakeTimeout,
  VersionMismatch,
  ChildCrashed,
  MalformedResponse,
  OutOfRangeProbability,
  Timeout,
  RemoteError,
  // cascade
  BackendFailure,
  NonContiguousInitial,
  InvalidSpec,
  // eval
  AllEmpty,
  EmptySeries,
  TooFewPairs,
  // harness
  ShapeOutOfBounds,
  EmptySweep,
  NoQuerySlices,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInitial: return "EmptyInitial";
    case ErrorCode::OverCapacity: return "OverCapacity";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidVolume: return "InvalidVolume";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::SpawnFailure: return "SpawnFailure";
    case ErrorCode::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChildCrashed: return "ChildCrashed";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::OutOfRangeProbability: return "OutOfRangeProbability";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RemoteError: return "RemoteError";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::NonContiguousInitial: return "NonContiguousInitial";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::AllEmpty: return "AllEmpty";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::ShapeOutOfBounds: return "ShapeOutOfBounds";
    case ErrorCode::EmptySweep: return "EmptySweep";
    case ErrorCode::NoQuerySlices: return "NoQuerySlices";
  }
  return "Unknown";
}

/// Errors raised by the engine carry a machine-readable code; what() holds
/// "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures that originate in a segmenter backend (bridge child,
  /// remote model) rather than in user input.
  bool is_backend_failure() const noexcept {
    switch (code_) {
      case ErrorCode::SpawnFailure:
      case ErrorCode::HandshakeTimeout:
      case ErrorCode::VersionMismatch:
      case ErrorCode::ChildCrashed:
      case ErrorCode::MalformedResponse:
      case ErrorCode::OutOfRangeProbability:
      case ErrorCode::Timeout:
      case ErrorCode::RemoteError:
      case ErrorCode::BackendFailure:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace ics
