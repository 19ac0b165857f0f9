// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sdf {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Index or argument outside its valid domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (e.g. a fusion hook altered grid metadata).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A checked runtime invariant does not hold.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace sdf
