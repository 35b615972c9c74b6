#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpmp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation failure: unbound variable or a domain violation.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be inverted is (numerically) singular.
class SingularError : public Error {
 public:
  using Error::Error;
};

/// An iterative method (Newton, shooting, optimizer, integrator) failed.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent problem data (name clashes, dimension mismatches, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpmp
