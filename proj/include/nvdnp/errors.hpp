#pragma once

#include <stdexcept>
#include <string>

namespace nvdnp {

/// Input violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a result (no root, no convergence).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computed quantity is outside what physics allows, e.g. |P| > 1.
class PhysicalImpossibility : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace nvdnp
