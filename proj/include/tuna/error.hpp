// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tuna {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on a value's domain is violated (empty input, n == 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input fails a structural or range check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Mean too close to zero for a scale-free statistic.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A configuration was about to be measured twice on the same worker.
class ExclusionViolation : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// ask/tell contract broken by the caller.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Predicted relative error <= -1 makes p / (s + 1) blow up.
class AdjustmentOverflow : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tuna
