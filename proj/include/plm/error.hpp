#pragma once

#include <stdexcept>
#include <string>

namespace plm {

// Error taxonomy mirrored by the CLI exit codes:
// usage/config -> 2, data/shape/io -> 3, numeric -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration value or invalid operation for the given setup.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched input data (files, fingerprints, vocabularies).
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (diverged training etc).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace plm
