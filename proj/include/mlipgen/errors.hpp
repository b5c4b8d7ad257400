#pragma once

#include <stdexcept>
#include <string>

namespace mlipgen {

enum class ErrorKind {
  InvalidArgument,
  SingularCell,
  DefectOutsideCell,
  OverlappingDefects,
  InvalidDefect,
  InadmissibleConfiguration,
  NoMinimumInBracket,
  EmptyBasis,
  NeighborAtZeroDistance,
  NotConverged,
  LeftAdmissibleSet,
  EigensolverFailed,
  EmptyAnnulus,
  CoreDomainTooSmall,
  InsufficientShells,
  UnstableTrainingEquilibrium,
  InadmissibleSample,
  PowerIterationNotConverged,
  DimensionMismatch,
  AllColumnsTruncated,
  LatticeMismatch,
  TooFewPoints,
  NonpositiveValue,
  ConfigParse,
  StageFailure,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-readable kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mlipgen
