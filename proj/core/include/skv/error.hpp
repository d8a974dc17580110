// Copyright 2026 The skv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace skv {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (budgets, factors, sizes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid input data (out-of-range token ids, too-short prompts, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition of a kernel.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace skv
