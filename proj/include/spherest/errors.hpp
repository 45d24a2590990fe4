#pragma once

#include <stdexcept>
#include <string>

namespace spherest {

// Invalid or inconsistent configuration (bad parameters, malformed config).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Input data that cannot be processed (malformed files, impossible values).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (non-convergence, singular systems, invalid state).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spherest
