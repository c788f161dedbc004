// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ape {

/// Base for every error the toolkit raises. The CLI maps the three families
/// below onto exit codes 1 (config), 2 (data) and 3 (numeric).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape disagreement between operands.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Argument outside its valid range (k > N, step > total, ...).
class RangeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in values, gradients or the loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ape
