#pragma once

#include <stdexcept>
#include <string>

namespace rsg {

/// Base class for every error raised by the library. The C API maps each
/// subclass onto one status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform to what an op expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument or configuration value is out of its domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its bytes do not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity surfaced where a finite value was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsg
