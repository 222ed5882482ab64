#pragma once

#include <stdexcept>
#include <string>

namespace spimex {

/// Base class for every failure raised by the solver stack.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fields defined on different grids were combined.
class SpecMismatch : public Error {
 public:
  using Error::Error;
};

/// A singular coefficient was evaluated outside its domain (p + p0 <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A modal divisor of a spectral solve vanished.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  NoConvergence(int iterations, double residual)
      : Error("Krylov solve did not converge after " + std::to_string(iterations) +
              " iterations (relative residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class NewtonStall : public Error {
 public:
  NewtonStall(int iterations, double residual, std::string what = "semi-smooth Newton stalled")
      : Error(what + " after " + std::to_string(iterations) + " iterations (residual " +
              std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// The mass-constrained projection has no feasible point.
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// An uncorrected run left the range of representable or plausible values.
class Diverged : public Error {
 public:
  Diverged(double time, double norm, const std::string& reason = "solution diverged")
      : Error(reason + " at t = " + std::to_string(time) + " (norm " + std::to_string(norm) + ")"),
        time_(time),
        norm_(norm) {}

  double time() const noexcept { return time_; }
  double norm() const noexcept { return norm_; }

 private:
  double time_;
  double norm_;
};

/// Post-condition audit (positivity, mass, multiplier sign) failed.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NonNestedGrids : public Error {
 public:
  using Error::Error;
};

}  // namespace spimex
