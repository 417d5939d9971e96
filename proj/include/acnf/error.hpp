// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace acnf {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad argument values, shape mismatches, violated preconditions.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed or unloadable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Encoder/decoder failures: corrupt streams, unsupported inputs.
class CodecError : public Error {
 public:
  using Error::Error;
};

// Dataset and cache problems (empty stores, integrity mismatches).
class DataError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent weight checkpoints.
class WeightsError : public Error {
 public:
  using Error::Error;
};

}  // namespace acnf
