#pragma once

#include <stdexcept>
#include <string>

namespace trimodal {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or argument contract violated by the caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or a quantity that must be positive is not.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file on disk (dataset, checkpoint, report).
class ParseError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

}  // namespace trimodal
