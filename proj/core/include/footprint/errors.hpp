#pragma once

#include <stdexcept>
#include <string>

namespace footprint {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInputDomain,    // value outside the permitted range
  kDimension,      // raster / tensor shape violation
  kConfiguration,  // bad option, unknown variant, bad threshold
  kManifest,       // dataset layout problems
  kLoad,           // weights / checkpoint could not be applied
  kIo,             // unreadable or unwritable file
  kAggregation,    // empty report list
  kEmptyRegion,    // metrics over zero pixels
  kDivergence,     // non-finite loss during training
  kPruning,        // pruning requested without deep supervision
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// True for errors caused by the data or the configuration rather than by
// the computation itself.
bool is_data_error(ErrorKind kind) noexcept;

}  // namespace footprint
