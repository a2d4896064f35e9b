#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maxent_smc {

/// Inconsistent dimensions, malformed parameters or an invalid configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested computation exceeds a configured capability, e.g. an
/// enumeration over 2^d states with d above the oracle cap.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method left its admissible parameter region.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace maxent_smc
