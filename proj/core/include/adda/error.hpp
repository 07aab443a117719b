#pragma once

#include <stdexcept>
#include <string>

namespace adda {

// Raised when an argument violates an operation's precondition (shapes,
// ranges, malformed configuration).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a file cannot be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adda
