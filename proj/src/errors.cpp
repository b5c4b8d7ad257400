#include "mlipgen/errors.hpp"

namespace mlipgen {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::SingularCell: return "SingularCell";
    case ErrorKind::DefectOutsideCell: return "DefectOutsideCell";
    case ErrorKind::OverlappingDefects: return "OverlappingDefects";
    case ErrorKind::InvalidDefect: return "InvalidDefect";
    case ErrorKind::InadmissibleConfiguration: return "InadmissibleConfiguration";
    case ErrorKind::NoMinimumInBracket: return "NoMinimumInBracket";
    case ErrorKind::EmptyBasis: return "EmptyBasis";
    case ErrorKind::NeighborAtZeroDistance: return "NeighborAtZeroDistance";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::LeftAdmissibleSet: return "LeftAdmissibleSet";
    case ErrorKind::EigensolverFailed: return "EigensolverFailed";
    case ErrorKind::EmptyAnnulus: return "EmptyAnnulus";
    case ErrorKind::CoreDomainTooSmall: return "CoreDomainTooSmall";
    case ErrorKind::InsufficientShells: return "InsufficientShells";
    case ErrorKind::UnstableTrainingEquilibrium: return "UnstableTrainingEquilibrium";
    case ErrorKind::InadmissibleSample: return "InadmissibleSample";
    case ErrorKind::PowerIterationNotConverged: return "PowerIterationNotConverged";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::AllColumnsTruncated: return "AllColumnsTruncated";
    case ErrorKind::LatticeMismatch: return "LatticeMismatch";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NonpositiveValue: return "NonpositiveValue";
    case ErrorKind::ConfigParse: return "ConfigParse";
    case ErrorKind::StageFailure: return "StageFailure";
  }
  return "Unknown";
}

}  // namespace mlipgen
