#pragma once

#include <stdexcept>
#include <string>

namespace iod {

/// Malformed input: bad scenario fields, out-of-range coordinates, bad flags.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical estimation step could not produce a result.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target coincides with a station, or line-of-sight vectors collapse.
class GeometryError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace iod
