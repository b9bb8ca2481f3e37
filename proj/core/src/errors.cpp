#include "footprint/errors.hpp"

namespace footprint {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInputDomain: return "input-domain";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kManifest: return "manifest";
    case ErrorKind::kLoad: return "load";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kAggregation: return "aggregation";
    case ErrorKind::kEmptyRegion: return "empty-region";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kPruning: return "pruning";
  }
  return "unknown";
}

bool is_data_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInputDomain:
    case ErrorKind::kDimension:
    case ErrorKind::kManifest:
    case ErrorKind::kIo:
    case ErrorKind::kEmptyRegion:
    case ErrorKind::kAggregation:
      return true;
    default:
      return false;
  }
}

}  // namespace footprint
