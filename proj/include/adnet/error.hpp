#pragma once

#include <stdexcept>
#include <string>

namespace adnet {

// Shape/contract mismatches between operator inputs.
struct ContractViolation : std::runtime_error {
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range configuration values (dilation < 1, gamma outside [1,3], ...).
struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken input data: missing files, orphan masks, undecodable images.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during training.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adnet
