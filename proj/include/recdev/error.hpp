#pragma once

#include <stdexcept>
#include <string>

namespace recdev {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments or configuration was violated.
class invalid_argument : public error {
 public:
  using error::error;
};

/// Adaptive quadrature did not reach its tolerance within the subdivision budget.
class quadrature_error : public error {
 public:
  using error::error;
};

/// Root bracketing or refinement failed.
class root_error : public error {
 public:
  using error::error;
};

/// An exponent left the range representable by double-precision exp().
class overflow_error : public error {
 public:
  using error::error;
};

}  // namespace recdev
