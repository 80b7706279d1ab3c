#pragma once

#include <stdexcept>
#include <string>

namespace gsicp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller handed in something that violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A file or directory does not follow the expected on-disk layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A linear-algebra step failed (singular matrix, non-finite value).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A depth frame produced no usable points.
class DegenerateFrame : public Error {
 public:
  using Error::Error;
};

}  // namespace gsicp
