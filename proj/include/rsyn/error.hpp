#pragma once

#include <stdexcept>
#include <string>

namespace rsyn {

// Error families used across the library. The CLI maps any of them to a
// nonzero exit status and prints what() verbatim.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents do not agree.
struct DimensionError : Error {
  using Error::Error;
};

// A configuration value violates its owning module's invariants.
struct ConfigError : Error {
  using Error::Error;
};

// Input data is unusable (too short, no overlap, rate mismatch...).
struct DataError : Error {
  using Error::Error;
};

// Text file could not be parsed; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// Binary container is truncated, has the wrong version or inconsistent sizes.
struct FormatError : Error {
  using Error::Error;
};

// Caller broke a function precondition.
struct ContractError : Error {
  using Error::Error;
};

}  // namespace rsyn
