#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace unmatched {

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar parameter lies outside its admissible range.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// No relaxation parameter makes the iteration convergent. Carries the
/// eigenvalue that violates the convergence condition.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::complex<double> eigenvalue)
      : std::runtime_error(what), eigenvalue_(eigenvalue) {}

  std::complex<double> eigenvalue() const { return eigenvalue_; }

 private:
  std::complex<double> eigenvalue_;
};

/// Subspaces are not complementary, or a matrix is rank deficient where
/// full rank is required.
class RankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A linear system that must be nonsingular is (numerically) singular.
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dense computation was requested for a problem above the desk-scale guard.
class SizeGuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unmatched
