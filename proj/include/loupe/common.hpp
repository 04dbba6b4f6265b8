#pragma once

#include <stdexcept>
#include <string>

namespace loupe {

// Error taxonomy used across the library. The CLI maps these to exit codes:
// ConfigError -> 1, IoError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward before forward), distinct from bad data.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace loupe
