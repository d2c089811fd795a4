#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace aggdiff {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the mathematical input was broken (negative density,
/// radius inside a support, unequal masses, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid numerical configuration (m <= 1, dimension mismatch, grid too small).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A kernel evaluator returned a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, double radius)
      : Error(what), radius_(radius) {}
  double radius() const noexcept { return radius_; }

 private:
  double radius_;
};

/// Fixed-point iteration did not converge.
class IterationError : public Error {
 public:
  IterationError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Time stepping failed (non-finite state, degenerate time step).
class StepError : public Error {
 public:
  using Error::Error;
};

/// An online run assertion (mass, energy, blow-up trend) was violated.
class AssertionFailure : public Error {
 public:
  AssertionFailure(const std::string& what, std::string record)
      : Error(what), record_(std::move(record)) {}
  const std::string& record() const noexcept { return record_; }

 private:
  std::string record_;
};

}  // namespace aggdiff
