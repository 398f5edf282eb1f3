#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace airtp {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (e.g. a vector off the simplex).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NotHermitianError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidProbabilityError : public Error {
 public:
  using Error::Error;
};

/// Runtime infeasibility: the instance is well-formed but cannot be served
/// (device out of power, unreachable device, singular link). The CLI maps
/// this family to exit code 2.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class InfeasibleAssignmentError : public InfeasibleError {
 public:
  InfeasibleAssignmentError(std::size_t device, double residual)
      : InfeasibleError("device " + std::to_string(device) +
                        " has no residual power for communication (c_n = " +
                        std::to_string(residual) + ")"),
        device_(device) {}
  std::size_t device() const noexcept { return device_; }

 private:
  std::size_t device_;
};

class IllConditionedChannelError : public InfeasibleError {
 public:
  IllConditionedChannelError(std::size_t device, double condition)
      : InfeasibleError("effective channel of device " + std::to_string(device) +
                        " is ill-conditioned (condition number " +
                        std::to_string(condition) + ")"),
        device_(device) {}
  std::size_t device() const noexcept { return device_; }

 private:
  std::size_t device_;
};

class DegenerateChannelError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

class RandomizationFailure : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

}  // namespace airtp
