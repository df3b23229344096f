#pragma once

#include <stdexcept>
#include <string>

namespace oobforest {

/// Raised for malformed or unusable input data (files, schemas, label sets).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for invalid configuration values (hyperparameters, method specs).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oobforest
