#pragma once

#include <stdexcept>
#include <string>

namespace graftcert {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between tensors, networks, or inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed artifact file; the message names the offending field.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally well-formed data that violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (ratios, budgets, coefficients).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced during evaluation or differentiation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Problem too large for an exhaustive procedure.
class SizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace graftcert
