#pragma once

#include <stdexcept>
#include <string>

namespace hxit {

/// Every failure mode in the framework carries one of these codes so callers
/// (and tests) can react to the category instead of parsing messages.
enum class ErrorCode {
  // node model
  Structural,          // path traverses a leaf, empty path segment, bad child name
  DecodeTruncated,     // byte stream ends mid-field
  DecodeUnknownTag,    // kind tag outside the wire grammar
  DecodeLengthOverflow,// declared count/length exceeds remaining bytes
  DecodeTrailingBytes, // well-formed node followed by extra bytes

  // mesh schema
  MeshMissingCoordset,
  MeshBadCoordset,     // malformed dims/origin/spacing or x/y/z length mismatch
  MeshUnknownTopology,
  MeshConnectivityRange,
  MeshFieldLength,
  MeshNonScalarField,

  // reduction pipeline
  PipelineEmpty,
  PipelineMissingField,
  PipelineStageMismatch,
  SliceOutOfBounds,

  // transport
  TransportConnect,
  TransportHandshake,
  TransportStepOrder,
  TransportBroken,
  ProtocolBadMagic,
  ProtocolBadVersion,
  ProtocolTruncated,
  ReplayRankCountConflict,
  ReplayDuplicateStep,
  ReplayIncompleteStep,

  // gateway
  ConfigInvalid,
  GatewayFinalized,
  GatewayTimestepOrder,
  GatewayState,

  // rendering / harness
  RenderMissingField,
  RenderBadMesh,
  ReportMismatch,
  Io,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

} // namespace hxit
