#pragma once

#include <stdexcept>
#include <string>

namespace stob {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes or axes that do not line up. The message names the
/// offending dimension wherever possible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or numerically impossible requests (e.g. finite
/// differences through a non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API contract violations, such as calling backward on a non-scalar or
/// replaying an empty tape.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed files. The message includes the byte offset or the field
/// being parsed when that information is available.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operating system I/O failures (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace stob
