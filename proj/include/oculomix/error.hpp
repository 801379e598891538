#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oculomix {

enum class ErrorKind {
  DanglingReference,
  DuplicateId,
  DuplicateTimePoint,
  InvalidRecord,
  InvalidRatios,
  InvalidConfig,
  EmptyCohort,
  EmptyIndex,
  NonPositiveAlpha,
  ShapeMismatch,
  NonFiniteInput,
  InvalidSupervision,
  DanglingAnchor,
  StaleCache,
  NonFiniteGradient,
  DegenerateLabels,
  NoComparablePairs,
  IncompatibleShapes,
  Io,
  Parse,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DanglingReference: return "DanglingReference";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::DuplicateTimePoint: return "DuplicateTimePoint";
    case ErrorKind::InvalidRecord: return "InvalidRecord";
    case ErrorKind::InvalidRatios: return "InvalidRatios";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyCohort: return "EmptyCohort";
    case ErrorKind::EmptyIndex: return "EmptyIndex";
    case ErrorKind::NonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::InvalidSupervision: return "InvalidSupervision";
    case ErrorKind::DanglingAnchor: return "DanglingAnchor";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::NoComparablePairs: return "NoComparablePairs";
    case ErrorKind::IncompatibleShapes: return "IncompatibleShapes";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace oculomix
