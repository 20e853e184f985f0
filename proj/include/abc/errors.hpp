#pragma once

#include <stdexcept>
#include <string>

namespace abc {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible operand shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or parameter values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed convergence and similar.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace abc
