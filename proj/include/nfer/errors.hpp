#pragma once

#include <stdexcept>
#include <string>

namespace nfer {

// Argument/shape errors use std::invalid_argument. The types below cover the
// remaining failure classes callers may want to tell apart.

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a NaN/Inf shows up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nfer
