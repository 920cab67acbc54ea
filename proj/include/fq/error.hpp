#pragma once

#include <stdexcept>
#include <string>

namespace fq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension, count or parameter outside the documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file, bad magic, inconsistent manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A quantization constraint or theorem hypothesis does not hold
/// (step-size/level condition, permutation variation bound, bound preconditions).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Linear-algebra failure such as a singular frame operator.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fq
