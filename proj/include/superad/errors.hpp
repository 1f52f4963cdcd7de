#pragma once

#include <stdexcept>
#include <string>

namespace superad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or arguments; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Anything wrong with input data; the CLI maps it to exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateDataError : public DataError {
 public:
  using DataError::DataError;
};

/// A metric whose value is undefined for the given input (e.g. a single class).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace superad
