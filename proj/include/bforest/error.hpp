#pragma once

#include <stdexcept>
#include <string>

namespace bforest {

/// Invalid configuration or API misuse (bad hyperparameters, bad flags).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad CSV, dimension mismatch, NaN).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bforest
