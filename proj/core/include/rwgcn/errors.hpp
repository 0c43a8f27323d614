#pragma once

#include <stdexcept>
#include <string>

namespace rwgcn {

// Shape or axis-length mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (window sizes, eps, probabilities, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operation not valid in the current object state (e.g. double attach).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input document. The message names the offending path/field.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input whose content violates a data rule.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-finite oracle evaluation, diverging loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rwgcn
