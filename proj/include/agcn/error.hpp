#pragma once

#include <stdexcept>
#include <string>

namespace agcn {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Bad user-supplied data: malformed files, asymmetric graphs, count mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments to an algorithm (k > n, empty input, non-square cost).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf, log of a nonpositive probability, degenerate distributions.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace agcn
