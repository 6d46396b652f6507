#pragma once

#include <stdexcept>
#include <string>

namespace speckle {

/// Base class for every domain error raised by the library. The CLI maps
/// these to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, out-of-range values, violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A similarity metric has no defined value for the given inputs
/// (constant image for PCC, zero MSE for PSNR).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or inconsistent file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File carries a recognised magic but a version this build cannot read.
class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Ill-conditioned solve, non-finite loss and similar numerical breakdowns.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Invariant broken inside the library itself.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace speckle
