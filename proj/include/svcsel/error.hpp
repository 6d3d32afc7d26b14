#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace svcsel {

/// Bad shapes, out-of-domain arguments, malformed configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failed factorization or non-finite intermediate result.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what, Eigen::Index pivot = -1)
      : std::runtime_error(what), pivot_(pivot) {}

  /// Index of the offending Cholesky pivot, or -1 when not applicable.
  [[nodiscard]] Eigen::Index pivot() const noexcept { return pivot_; }

 private:
  Eigen::Index pivot_;
};

/// X^T Sigma^-1 X is rank deficient.
class SingularDesign : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

/// An iterative solver ran out of iterations. Carries the last iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last)
      : std::runtime_error(what), last_(std::move(last)) {}

  [[nodiscard]] const Eigen::VectorXd& last_iterate() const noexcept { return last_; }

 private:
  Eigen::VectorXd last_;
};

/// The box-constrained line search could not find a finite trial point.
class LineSearchFailure : public NumericalFailure {
 public:
  LineSearchFailure(const std::string& what, Eigen::VectorXd best, double best_value)
      : NumericalFailure(what), best_(std::move(best)), best_value_(best_value) {}

  [[nodiscard]] const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
  [[nodiscard]] double best_value() const noexcept { return best_value_; }

 private:
  Eigen::VectorXd best_;
  double best_value_;
};

}  // namespace svcsel
