#pragma once

#include <stdexcept>
#include <string>

namespace dcreg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or vector lengths are inconsistent.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated (bad parameter, wrong call order).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required file or artifact is missing or unreadable; exit code 3.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

/// NaN, divergence or an unbounded objective; exit code 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcreg
