#ifndef EVOMEASURE_ERRORS_HPP
#define EVOMEASURE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace evomeasure {

/// Caller misuse: mismatched spaces, bad indices, invalid arguments.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration document or model component failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver produced NaN/overflow, lost positivity, or failed to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evomeasure

#endif  // EVOMEASURE_ERRORS_HPP
