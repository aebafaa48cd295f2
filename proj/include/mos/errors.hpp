#pragma once

#include <stdexcept>
#include <string>

namespace mos {

/// Invalid configuration (bad sizes, out-of-range hyperparameters, unknown keys).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Problems with input data files (missing, truncated, corrupt).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Dimension or element-count mismatch between tensors/images.
class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Non-finite values encountered during compute (diverged training, bad math).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Failed file I/O that is not a data-format problem (unwritable path, rename failure).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace mos
