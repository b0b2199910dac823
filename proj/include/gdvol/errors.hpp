#pragma once

#include <stdexcept>
#include <string>

namespace gdvol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I/O family (CLI exit code 2)
class IoError : public Error {
 public:
  using Error::Error;
};
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class LengthError : public IoError {
 public:
  using IoError::IoError;
};

// Invalid inputs and configurations (CLI exit code 1)
class ParameterError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};
class DimensionMismatchError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};
class UnsupportedStencilError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Numerical failures (CLI exit code 3)
class NumericalError : public Error {
 public:
  using Error::Error;
};
class SingularOperatorError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gdvol
