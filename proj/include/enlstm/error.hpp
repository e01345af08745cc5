#pragma once

#include <stdexcept>
#include <string>

namespace enlstm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, bad configuration values, violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Numerical failure: singular systems, non-finite activations, diverged updates.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input files (CSV, config, checkpoint).
class ParseError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace enlstm
