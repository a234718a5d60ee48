#pragma once

#include <stdexcept>
#include <string>

namespace ergo {

// Machine-readable failure codes surfaced through the library API and the CLI.
enum class ErrorCode {
  SyntaxError,
  DimensionMismatch,
  UnboundedDerivative,
  PrecisionUnreachable,
  EpsilonOutOfRange,
  UnsupportedKernel,
  MassMismatch,
  PartitionMismatch,
  MeshTooCoarse,
  NotIrreducible,
  DegenerateScale,
  NoConvergence,
  ZeroMatrix,
  CertificateUnobtainable,
  ResourceCap,
  GammaTooLarge,
  QuadratureFailure,
  ContractionViolated,
  ConfigError,
  InsufficientSamples,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnboundedDerivative: return "UnboundedDerivative";
    case ErrorCode::PrecisionUnreachable: return "PrecisionUnreachable";
    case ErrorCode::EpsilonOutOfRange: return "EpsilonOutOfRange";
    case ErrorCode::UnsupportedKernel: return "UnsupportedKernel";
    case ErrorCode::MassMismatch: return "MassMismatch";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::MeshTooCoarse: return "MeshTooCoarse";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroMatrix: return "ZeroMatrix";
    case ErrorCode::CertificateUnobtainable: return "CertificateUnobtainable";
    case ErrorCode::ResourceCap: return "ResourceCap";
    case ErrorCode::GammaTooLarge: return "GammaTooLarge";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::ContractionViolated: return "ContractionViolated";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ergo
