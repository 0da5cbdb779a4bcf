// Copyright rptest contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rptest {

/// Raised when a caller violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine fails on otherwise valid input.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The smoothing operator carries no variance (for example, Delta == 0).
class DegenerateError : public ComputationError {
 public:
  using ComputationError::ComputationError;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw ArgumentError(message);
  }
}

}  // namespace detail
}  // namespace rptest
