#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "svcsel/error.hpp"
#include "svcsel/information.hpp"
#include "svcsel/kernels.hpp"
#include "svcsel/lasso.hpp"
#include "svcsel/linalg.hpp"
#include "svcsel/mbo.hpp"
#include "svcsel/model.hpp"
#include "svcsel/parallel.hpp"
#include "svcsel/pmle.hpp"

namespace svcsel {

/// Conditional mean of the signal X_new mu + sum_k w_k(s_new) eta_k(s_new)
/// given the training responses:
///   X_new mu + C_* Sigma_Y^-1 (y - X mu),
/// where C_*(i, l) = sum_k sigma_k^2 w_new(i,k) w(l,k) r(|s_new_i - s_l|_A / rho_k).
/// The nugget is not part of the prediction target.
inline Eigen::VectorXd predict(const SvcParams& params, const SvcLikelihood& train, const Locations& new_locations,
                               const Eigen::MatrixXd& X_new, const Eigen::MatrixXd& W_new) {
  const Dataset& data = train.data();
  const Eigen::Index m = new_locations.rows();
  if (X_new.rows() != m || W_new.rows() != m) throw InvalidArgument("predict: row counts of new data differ");
  if (X_new.cols() != data.p() || W_new.cols() != data.q()) {
    throw InvalidArgument("predict: new design has wrong number of columns");
  }
  if (new_locations.cols() != data.dim()) throw InvalidArgument("predict: coordinate dimension mismatch");
  if (params.p() != data.p() || params.q() != data.q()) throw InvalidArgument("predict: parameter dimensions");
  params.validate();

  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  if (data.p() > 0) out = X_new * params.mu;

  bool any_variance = false;
  for (const auto& g : params.gp) any_variance = any_variance || g.variance != 0.0;
  if (!any_variance) return out;

  const Eigen::VectorXd theta = params.theta();
  const auto llt = cholesky(train.sigma_y(theta));
  const Eigen::VectorXd alpha = llt.solve(train.residual(params.mu));
  const Eigen::MatrixXd cross = cross_distance_matrix(new_locations, data.locations, train.anisotropy());
  for (Eigen::Index k = 0; k < data.q(); ++k) {
    const GpParams& g = params.gp[k];
    if (g.variance == 0.0) continue;
    const Eigen::ArrayXXd corr = correlation_array(cross.array() / g.range, train.spec());
    // (w_new w^T) .* corr times alpha, without forming the outer product
    const Eigen::VectorXd wa = data.W.col(k).cwiseProduct(alpha);
    out.array() += g.variance * W_new.col(k).array() * (corr.matrix() * wa).array();
  }
  return out;
}

/// In-sample signal estimate at the training locations.
inline Eigen::VectorXd fitted_values(const SvcParams& params, const SvcLikelihood& train) {
  const Dataset& d = train.data();
  return predict(params, train, d.locations, d.X, d.W);
}

inline double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() < 1) throw InvalidArgument("rmse: length mismatch");
  return std::sqrt((y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()));
}

/// Fold assignment (zero-based fold index per observation). Sizes differ by at most one.
struct FoldPlan {
  int k = 0;
  std::vector<int> assignment;

  [[nodiscard]] std::vector<Eigen::Index> test_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  [[nodiscard]] std::vector<Eigen::Index> train_indices(int fold) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
  }

  [[nodiscard]] std::vector<int> sizes() const {
    std::vector<int> s(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++s[static_cast<std::size_t>(a)];
    return s;
  }
};

/// Uniform random permutation cut into k contiguous chunks.
template <typename Rng>
FoldPlan make_fold_plan(Eigen::Index n, int k, Rng& rng) {
  if (k < 2) throw InvalidArgument("cross-validation needs k >= 2");
  if (n < k) throw InvalidArgument("cross-validation needs n >= k");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldPlan plan;
  plan.k = k;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int f = 0; f < k; ++f) {
    const Eigen::Index begin = n * f / k;
    const Eigen::Index end = n * (f + 1) / k;
    for (Eigen::Index i = begin; i < end; ++i) plan.assignment[static_cast<std::size_t>(perm[i])] = f;
  }
  return plan;
}

struct AlassoOptions {
  int n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  int inner_folds = 10;
  double weight_eps = 1e-10;
};

struct AlassoFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd weights;
  double lambda = 0.0;
};

/// Adaptive LASSO for the plain linear model (identity error covariance):
/// weights 1/|OLS|, shrinkage chosen by inner k-fold CV on mean squared error
/// over a log-spaced path, then refit on all rows.
template <typename Rng>
AlassoFit alasso_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const AlassoOptions& opts, Rng& rng) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  if (X.rows() != n) throw InvalidArgument("alasso: dimension mismatch");
  AlassoFit out;
  const Eigen::VectorXd ols = whitened_least_squares(y, X);
  out.weights.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double a = std::abs(ols(j));
    out.weights(j) = a < opts.weight_eps ? std::numeric_limits<double>::infinity() : 1.0 / a;
  }
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::isinf(out.weights(j))) continue;
    lambda_max = std::max(lambda_max, std::abs(X.col(j).dot(y)) / static_cast<double>(n) / out.weights(j));
  }
  if (!(lambda_max > 0.0)) {
    out.coef = Eigen::VectorXd::Zero(p);
    return out;
  }
  std::vector<double> grid(static_cast<std::size_t>(opts.n_lambda));
  for (int i = 0; i < opts.n_lambda; ++i) {
    const double t = opts.n_lambda > 1 ? static_cast<double>(i) / (opts.n_lambda - 1) : 0.0;
    grid[static_cast<std::size_t>(i)] = lambda_max * std::pow(opts.lambda_min_ratio, t);
  }

  const int kin = static_cast<int>(std::min<Eigen::Index>(opts.inner_folds, n));
  std::vector<double> cv_err(grid.size(), 0.0);
  if (kin >= 2) {
    const FoldPlan inner = make_fold_plan(n, kin, rng);
    for (int f = 0; f < kin; ++f) {
      const auto tr = inner.train_indices(f);
      const auto te = inner.test_indices(f);
      const Eigen::VectorXd ytr = y(tr);
      const Eigen::MatrixXd Xtr = X(tr, Eigen::all);
      Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        coef = weighted_lasso(ytr, Xtr, grid[g] * out.weights, coef);
        cv_err[g] += (y(te) - X(te, Eigen::all) * coef).squaredNorm();
      }
    }
  }
  const auto best = std::min_element(cv_err.begin(), cv_err.end()) - cv_err.begin();
  out.lambda = grid[static_cast<std::size_t>(best)];
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
  for (std::size_t g = 0; g <= static_cast<std::size_t>(best); ++g) {
    coef = weighted_lasso(y, X, grid[g] * out.weights, coef);
  }
  out.coef = coef;
  return out;
}

enum class CvMethod { ALASSO, MLE, PMLE };

inline const char* to_string(CvMethod m) {
  switch (m) {
    case CvMethod::ALASSO: return "ALASSO";
    case CvMethod::MLE: return "MLE";
    case CvMethod::PMLE: return "PMLE";
  }
  return "unknown";
}

inline CvMethod parse_cv_method(const std::string& s) {
  if (s == "ALASSO" || s == "alasso") return CvMethod::ALASSO;
  if (s == "MLE" || s == "mle") return CvMethod::MLE;
  if (s == "PMLE" || s == "pmle") return CvMethod::PMLE;
  throw InvalidArgument("unknown method '" + s + "'");
}

struct CvOptions {
  KernelSpec spec;
  AnisotropyMatrix aniso;
  CdConfig cd;
  TuneConfig tune;
  FitOptions fit;
  AlassoOptions alasso;
  /// Covariance bounds; derived from each training fold's locations when unset.
  std::optional<CovarianceBounds> bounds;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct FoldOutcome {
  int fold = 0;
  CvMethod method = CvMethod::MLE;
  int n_test = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  int n_fixed = 0;
  int n_random = 0;
  bool ok = false;
  std::string error;
  Eigen::VectorXd predictions;
  std::vector<Eigen::Index> test_rows;
};

struct CvResult {
  CvMethod method = CvMethod::MLE;
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
  double sd_rmse = std::numeric_limits<double>::quiet_NaN();
  int n_failed = 0;
};

/// Fit and predict one fold. The PMLE pipeline is ML fit, adaptive weights,
/// shrinkage tuning and the penalized fit at the tuned pair, all on the
/// training rows only.
inline FoldOutcome run_fold(const Dataset& data, const FoldPlan& plan, int fold, CvMethod method,
                            const CvOptions& opts) {
  FoldOutcome out;
  out.fold = fold;
  out.method = method;
  out.test_rows = plan.test_indices(fold);
  out.n_test = static_cast<int>(out.test_rows.size());
  const Dataset train = data.rows(plan.train_indices(fold));
  const Dataset test = data.rows(out.test_rows);
  std::mt19937_64 rng(opts.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(fold + 1)));
  try {
    if (method == CvMethod::ALASSO) {
      const AlassoFit fit = alasso_fit(train.y, train.X, opts.alasso, rng);
      out.predictions = test.X * fit.coef;
      out.n_fixed = static_cast<int>((fit.coef.array() != 0.0).count());
      out.n_random = 0;
    } else {
      const SvcLikelihood lik(train, opts.spec, opts.aniso);
      const CovarianceBounds bounds = opts.bounds ? *opts.bounds : CovarianceBounds::for_locations(train.locations);
      FitResult fit = fit_mle(lik, bounds, std::nullopt, opts.cd, opts.fit);
      if (method == CvMethod::PMLE) {
        TuneConfig tc = opts.tune;
        tc.seed = rng();
        const TuneResult tuned = tune_shrinkage(lik, bounds, fit, opts.cd, tc, opts.fit);
        if (!tuned.best_fit) throw NumericalFailure("every shrinkage evaluation failed");
        fit = *tuned.best_fit;
      }
      out.predictions = predict(fit.params, lik, test.locations, test.X, test.W);
      const SupportSize s = count_nonzero(fit.params);
      out.n_fixed = s.mu;
      out.n_random = s.var;
    }
    out.rmse = rmse(test.y, out.predictions);
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

/// k-fold cross-validation of one method. Failed folds are recorded and left
/// out of the mean and standard deviation.
inline CvResult kfold_cv(const Dataset& data, int k, CvMethod method, const CvOptions& opts) {
  data.validate();
  std::mt19937_64 rng(opts.seed);
  CvResult res;
  res.method = method;
  res.plan = make_fold_plan(data.n(), k, rng);
  res.folds.resize(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), opts.threads, [&](std::size_t f) {
    res.folds[f] = run_fold(data, res.plan, static_cast<int>(f), method, opts);
  });
  std::vector<double> vals;
  for (const auto& f : res.folds) {
    if (f.ok) {
      vals.push_back(f.rmse);
    } else {
      ++res.n_failed;
    }
  }
  if (!vals.empty()) {
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    res.mean_rmse = mean;
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      res.sd_rmse = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
  }
  return res;
}

}  // namespace svcsel
