#ifndef PISHGUVE_ERRORS_HPP
#define PISHGUVE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pv {

/// Shape or dimension mismatch between tensors.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value produced or consumed where finiteness is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input data (bad CSV row, duplicate keys, out-of-range fields).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API contract violation (e.g. backward on a non-scalar).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pv

#endif
