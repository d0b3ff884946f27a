#pragma once

#include <stdexcept>
#include <string>

namespace mmui {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (matmul inner dims, concat/add spatial mismatch, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model / run configuration (odd kernel required, output extent < 1, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller (NaN input, target outside [0,1]).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// API used in the wrong order or with the wrong combination of arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values detected during optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmui
