#pragma once

#include <stdexcept>
#include <string>

namespace mfmerton {

enum class ErrorKind {
  SingularSigma,
  MeshMismatch,
  BracketFailure,
  HypothesisViolation,
  OutsideConstraintSet,
  UnboundedHamiltonian,
  DegenerateCase,
  GammaOutOfRange,
  DominationFailure,
  InvalidArgument,
  ConfigError,
  IoError,
  Internal
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularSigma: return "SingularSigma";
    case ErrorKind::MeshMismatch: return "MeshMismatch";
    case ErrorKind::BracketFailure: return "BracketFailure";
    case ErrorKind::HypothesisViolation: return "HypothesisViolation";
    case ErrorKind::OutsideConstraintSet: return "OutsideConstraintSet";
    case ErrorKind::UnboundedHamiltonian: return "UnboundedHamiltonian";
    case ErrorKind::DegenerateCase: return "DegenerateCase";
    case ErrorKind::GammaOutOfRange: return "GammaOutOfRange";
    case ErrorKind::DominationFailure: return "DominationFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Internal: return "InternalError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace mfmerton
