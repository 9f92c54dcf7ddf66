#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stablebel {

/// Input rejected by a precondition check. `field()` names the offending
/// parameter (config key or argument name) when one is known.
class InvalidArgument : public std::invalid_argument {
 public:
  InvalidArgument(std::string field, const std::string& message)
      : std::invalid_argument(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A solver state became non-finite or exceeded the overflow guard.
class NumericDivergence : public std::runtime_error {
 public:
  NumericDivergence(double time, const std::string& message)
      : std::runtime_error(message + " (t=" + std::to_string(time) + ")"), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A single Monte Carlo path could not be used (e.g. the subordinator stayed at 0).
class PathRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const char* field, const std::string& message) {
  if (!condition) throw InvalidArgument(field, message);
}

}  // namespace stablebel
