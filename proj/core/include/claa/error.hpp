// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace claa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model configuration or ranking parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed model container: missing tensors, bad headers, shape mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Precondition violation on an operation's arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The oracle generated no tokens, so no answer-informed ranking exists.
class OracleUndefined : public Error {
 public:
  OracleUndefined() : Error("oracle undefined: generation produced no tokens") {}
};

/// Rank correlation requested on a vector with zero rank variance.
class DegenerateRanking : public Error {
 public:
  DegenerateRanking() : Error("degenerate ranking") {}
};

}  // namespace claa
