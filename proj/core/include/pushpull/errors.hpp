#pragma once

#include <stdexcept>
#include <string>

namespace pushpull {

/// A caller broke a documented precondition (unknown id, malformed input).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A Bayesian update hit a zero normalizer: the observation is impossible
/// under the current belief. Signals a modeling bug, never renormalized away.
class InconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Drift-rate calibration could not reach the requested absorption time.
class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, double min_rate_hz,
                   double max_rate_hz)
      : std::runtime_error(what),
        min_rate_hz_(min_rate_hz),
        max_rate_hz_(max_rate_hz) {}

  double min_rate_hz() const noexcept { return min_rate_hz_; }
  double max_rate_hz() const noexcept { return max_rate_hz_; }

 private:
  double min_rate_hz_;
  double max_rate_hz_;
};

/// Invalid experiment or simulation configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pushpull
