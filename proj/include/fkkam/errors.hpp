#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fkkam {

/// Every failure the solvers can raise. The category groups them for the CLI
/// exit-status taxonomy.
enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  ImaginaryResidue,
  NonPositiveCoefficient,
  MixedSign,
  SmallDivisorUnderflow,
  NonzeroMean,
  ResonanceDetected,
  UnsolvableResonant,
  TransversalityLoss,
  RangeViolation,
  NondegeneracyViolation,
  MaxIterations,
  NoProgress,
  UniquenessViolation,
  InterpolationUnderResolved,
  SeriesDivergence,
  SingularSystem,
};

enum class ErrorCategory { Precondition, Convergence, Internal };

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ImaginaryResidue: return "ImaginaryResidue";
    case ErrorKind::NonPositiveCoefficient: return "NonPositiveCoefficient";
    case ErrorKind::MixedSign: return "MixedSign";
    case ErrorKind::SmallDivisorUnderflow: return "SmallDivisorUnderflow";
    case ErrorKind::NonzeroMean: return "NonzeroMean";
    case ErrorKind::ResonanceDetected: return "ResonanceDetected";
    case ErrorKind::UnsolvableResonant: return "UnsolvableResonant";
    case ErrorKind::TransversalityLoss: return "TransversalityLoss";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::NondegeneracyViolation: return "NondegeneracyViolation";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::NoProgress: return "NoProgress";
    case ErrorKind::UniquenessViolation: return "UniquenessViolation";
    case ErrorKind::InterpolationUnderResolved: return "InterpolationUnderResolved";
    case ErrorKind::SeriesDivergence: return "SeriesDivergence";
    case ErrorKind::SingularSystem: return "SingularSystem";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositiveCoefficient:
    case ErrorKind::MixedSign:
    case ErrorKind::SmallDivisorUnderflow:
    case ErrorKind::NonzeroMean:
    case ErrorKind::ResonanceDetected:
    case ErrorKind::UnsolvableResonant:
    case ErrorKind::TransversalityLoss:
    case ErrorKind::RangeViolation:
    case ErrorKind::NondegeneracyViolation:
    case ErrorKind::InvalidArgument:
      return ErrorCategory::Precondition;
    case ErrorKind::MaxIterations:
    case ErrorKind::NoProgress:
    case ErrorKind::UniquenessViolation:
    case ErrorKind::SeriesDivergence:
      return ErrorCategory::Convergence;
    default:
      return ErrorCategory::Internal;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

/// Short scientific rendering of a value for error messages.
inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", x);
  return buf;
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace fkkam
