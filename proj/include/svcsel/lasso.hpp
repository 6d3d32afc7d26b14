#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "svcsel/error.hpp"
#include "svcsel/linalg.hpp"

namespace svcsel {

/// GLS problem transformed to identity error covariance:
/// y_tilde = L^-1 y, X_tilde = L^-1 X with L L^T = Sigma_Y.
struct WhitenedProblem {
  Eigen::VectorXd y_tilde;
  Eigen::MatrixXd X_tilde;
  Eigen::MatrixXd chol_lower;
};

inline WhitenedProblem whiten(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& sigma_y) {
  if (sigma_y.rows() != y.size() || X.rows() != y.size()) {
    throw InvalidArgument("whiten: dimension mismatch");
  }
  const auto llt = cholesky(sigma_y);
  WhitenedProblem out;
  out.chol_lower = llt.matrixL();
  const auto L = out.chol_lower.triangularView<Eigen::Lower>();
  out.y_tilde = L.solve(y);
  out.X_tilde = L.solve(X);
  return out;
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct LassoOptions {
  int max_sweeps = 100000;
  /// Stop when the largest coefficient change in a sweep falls below
  /// tol * max(1, ||mu||_inf).
  double tol = 1e-9;
  /// Called after every sweep with (sweep index, objective value).
  std::function<void(int, double)> on_sweep;
};

/// (1/2n) ||y - X mu||^2 + sum_j lambda_j |mu_j|, with 0 * inf = 0.
inline double lasso_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& lambdas, const Eigen::VectorXd& mu) {
  const double n = static_cast<double>(y.size());
  double pen = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (mu(j) != 0.0) pen += lambdas(j) * std::abs(mu(j));
  }
  return (y - X * mu).squaredNorm() / (2.0 * n) + pen;
}

/// Cyclic coordinate descent for the weighted LASSO
///   argmin (1/2n) ||y - X mu||^2 + sum_j lambda_j |mu_j|.
/// An infinite lambda_j keeps mu_j at exactly zero; zero-norm columns get 0.
inline Eigen::VectorXd weighted_lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& lambdas, const Eigen::VectorXd& mu_init,
                                      const LassoOptions& opts = {}) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || lambdas.size() != p || mu_init.size() != p) {
    throw InvalidArgument("weighted_lasso: dimension mismatch");
  }
  if (n < 1) throw InvalidArgument("weighted_lasso: empty problem");
  if (!y.allFinite() || !X.allFinite() || !mu_init.allFinite()) {
    throw InvalidArgument("weighted_lasso: non-finite input");
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(lambdas(j) >= 0.0)) throw InvalidArgument("weighted_lasso: negative or NaN lambda");
  }
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd col_sq = X.colwise().squaredNorm().transpose() / nd;

  Eigen::VectorXd mu = mu_init;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::isinf(lambdas(j)) || col_sq(j) == 0.0) mu(j) = 0.0;
  }
  Eigen::VectorXd resid = y - X * mu;

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::isinf(lambdas(j)) || col_sq(j) == 0.0) continue;
      const double old = mu(j);
      const double z = X.col(j).dot(resid) / nd + col_sq(j) * old;
      const double next = soft_threshold(z, lambdas(j)) / col_sq(j);
      if (next != old) {
        resid.noalias() -= (next - old) * X.col(j);
        mu(j) = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (opts.on_sweep) opts.on_sweep(sweep, lasso_objective(y, X, lambdas, mu));
    const double scale = std::max(1.0, p > 0 ? mu.cwiseAbs().maxCoeff() : 0.0);
    if (max_change < opts.tol * scale) return mu;
  }
  throw ConvergenceError("weighted_lasso: no convergence after " + std::to_string(opts.max_sweeps) +
                             " sweeps",
                         mu);
}

/// Largest violation of the LASSO optimality conditions:
/// |g_j| <= lambda_j where mu_j = 0 and g_j = lambda_j sign(mu_j) otherwise,
/// with g = X^T (y - X mu) / n.
inline double lasso_kkt_residual(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& lambdas, const Eigen::VectorXd& mu) {
  const double n = static_cast<double>(y.size());
  const Eigen::VectorXd g = X.transpose() * (y - X * mu) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (X.col(j).squaredNorm() == 0.0) continue;
    double v;
    if (mu(j) == 0.0) {
      v = std::isinf(lambdas(j)) ? 0.0 : std::max(0.0, std::abs(g(j)) - lambdas(j));
    } else {
      v = std::abs(g(j) - lambdas(j) * (mu(j) > 0.0 ? 1.0 : -1.0));
    }
    worst = std::max(worst, v);
  }
  return worst;
}

/// Least squares on an already whitened problem; throws SingularDesign on rank loss.
inline Eigen::VectorXd whitened_least_squares(const Eigen::VectorXd& y_tilde,
                                              const Eigen::MatrixXd& X_tilde) {
  if (X_tilde.cols() == 0) return Eigen::VectorXd(0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X_tilde);
  if (qr.rank() < X_tilde.cols()) {
    throw SingularDesign("design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(X_tilde.cols()) + ")");
  }
  return qr.solve(y_tilde);
}

/// (X^T Sigma^-1 X)^-1 X^T Sigma^-1 y.
inline Eigen::VectorXd gls(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& sigma_y) {
  const WhitenedProblem w = whiten(y, X, sigma_y);
  return whitened_least_squares(w.y_tilde, w.X_tilde);
}

}  // namespace svcsel
