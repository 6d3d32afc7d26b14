#pragma once

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "svcsel/error.hpp"

namespace svcsel {

namespace detail {

// Leading principal block size at which LLT first breaks down.
inline Eigen::Index failing_pivot(const Eigen::MatrixXd& m) {
  Eigen::Index lo = 1;
  Eigen::Index hi = m.rows();
  while (lo < hi) {
    const Eigen::Index mid = lo + (hi - lo) / 2;
    Eigen::LLT<Eigen::MatrixXd> llt(m.topLeftCorner(mid, mid));
    if (llt.info() == Eigen::Success) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo - 1;
}

}  // namespace detail

/// Cholesky factorization used everywhere a covariance matrix is inverted,
/// whitened or has its log-determinant taken. Throws NumericalFailure naming
/// the zero-based pivot at which the factorization broke down.
inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& m, double jitter = 0.0) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument("cholesky: matrix is not square");
  }
  if (!m.allFinite()) {
    throw NumericalFailure("cholesky: matrix has non-finite entries");
  }
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (jitter > 0.0) {
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
  } else {
    llt.compute(m);
  }
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd shifted = m;
    shifted.diagonal().array() += jitter;
    const Eigen::Index pivot = detail::failing_pivot(shifted);
    throw NumericalFailure("cholesky: matrix not positive definite at pivot " + std::to_string(pivot),
                           pivot);
  }
  return llt;
}

/// log det from a Cholesky factor: 2 * sum(log L_ii).
inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace svcsel
