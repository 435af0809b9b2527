#pragma once

#include <stdexcept>
#include <string>

namespace dcpt {

// Bad inputs: shapes, out-of-range parameters, malformed files.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown keys, missing paths, inconsistent flags.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcpt
