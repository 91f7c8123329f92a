#pragma once

#include <stdexcept>
#include <string>

namespace mvhet {

enum class ErrorKind {
  UnknownType,
  UnknownRelation,
  EndpointOutOfRange,
  FeatureShapeMismatch,
  MissingInversePair,
  IoError,
  ParseError,
  ManifestInvalid,
  SpecInvalid,
  ShapeMismatch,
  InvalidProbability,
  EmptyMask,
  NotScalarLoss,
  RowCountMismatch,
  EmptyViewSet,
  IndexOutOfRange,
  TypeChainBroken,
  TypeMismatch,
  MissingLabels,
  MissingLinkSplit,
  NonFiniteLoss,
  EmptyPositives,
  DegenerateSplit,
  SingleClass,
  CheckpointShapeMismatch,
  UnknownVariant,
  ConfigInvalid,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnknownType: return "UnknownType";
    case ErrorKind::UnknownRelation: return "UnknownRelation";
    case ErrorKind::EndpointOutOfRange: return "EndpointOutOfRange";
    case ErrorKind::FeatureShapeMismatch: return "FeatureShapeMismatch";
    case ErrorKind::MissingInversePair: return "MissingInversePair";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ManifestInvalid: return "ManifestInvalid";
    case ErrorKind::SpecInvalid: return "SpecInvalid";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::EmptyViewSet: return "EmptyViewSet";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::TypeChainBroken: return "TypeChainBroken";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::MissingLabels: return "MissingLabels";
    case ErrorKind::MissingLinkSplit: return "MissingLinkSplit";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyPositives: return "EmptyPositives";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::CheckpointShapeMismatch: return "CheckpointShapeMismatch";
    case ErrorKind::UnknownVariant: return "UnknownVariant";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

// Single exception type for the whole library. `a`/`b` carry positional
// detail where the contract names one: ParseError(line, column),
// TypeChainBroken(level).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg, long a = -1, long b = -1)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg),
        kind_(kind),
        a_(a),
        b_(b) {}

  ErrorKind kind() const { return kind_; }
  long line() const { return a_; }
  long column() const { return b_; }
  long level() const { return a_; }

 private:
  ErrorKind kind_;
  long a_;
  long b_;
};

}  // namespace mvhet
