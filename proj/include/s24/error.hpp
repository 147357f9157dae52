// SPDX-License-Identifier: Apache-2.0
/**
 * @file error.hpp
 * @brief Exception types shared by every s24 module.
 */
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace s24 {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (inner dimensions, mask vs tensor, ...).
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A dimension violates a divisibility requirement (2:4 groups need multiples of 4).
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A sparse operand has the wrong group orientation for the requested product.
class OrientationError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Backward called with a cache that does not belong to the given config/params.
class StateError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

/// Malformed binary file; carries the byte offset where parsing failed.
class FormatError : public Error {
public:
  FormatError(const std::string &what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
public:
  explicit DivergenceError(std::int64_t step, const std::string &what)
      : Error("diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::int64_t step() const noexcept { return step_; }

private:
  std::int64_t step_;
};

} // namespace s24
