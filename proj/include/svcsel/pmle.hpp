#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "svcsel/error.hpp"
#include "svcsel/information.hpp"
#include "svcsel/kernels.hpp"
#include "svcsel/lasso.hpp"
#include "svcsel/model.hpp"
#include "svcsel/optim.hpp"

namespace svcsel {

/// Lower bounds on the covariance parameters: sigma_k^2 >= 0,
/// rho_k >= range_lower, tau^2 >= nugget_lower. Upper bounds are open.
struct CovarianceBounds {
  double range_lower = 1e-6;
  double nugget_lower = 1e-4;
  double range_upper = std::numeric_limits<double>::infinity();

  [[nodiscard]] BoxBounds box(Eigen::Index q) const {
    const double inf = std::numeric_limits<double>::infinity();
    BoxBounds b{Eigen::VectorXd(theta_index::size(q)), Eigen::VectorXd(theta_index::size(q))};
    for (Eigen::Index k = 0; k < q; ++k) {
      b.lower(theta_index::range(k)) = range_lower;
      b.upper(theta_index::range(k)) = range_upper;
      b.lower(theta_index::variance(k)) = 0.0;
      b.upper(theta_index::variance(k)) = inf;
    }
    b.lower(theta_index::nugget(q)) = nugget_lower;
    b.upper(theta_index::nugget(q)) = inf;
    return b;
  }

  /// Lower range bound one third of the typical neighbour spacing,
  /// extent / (3 n^(1/d)), where extent is the largest coordinate span. On an
  /// m x m grid in the unit square this is 1 / (3m).
  static CovarianceBounds for_locations(const Locations& locs) {
    CovarianceBounds b;
    const Eigen::Index n = locs.rows();
    const Eigen::Index d = locs.cols();
    double extent = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      extent = std::max(extent, locs.col(c).maxCoeff() - locs.col(c).minCoeff());
    }
    if (extent > 0.0 && n > 0) {
      b.range_lower = extent / (3.0 * std::pow(static_cast<double>(n), 1.0 / static_cast<double>(d)));
    }
    return b;
  }
};

/// Alternation controls: stop when ||theta_t - theta_{t-1}||_1 / ||theta_{t-1}||_1 < delta
/// or after t_max iterations.
struct CdConfig {
  double delta = 1e-6;
  int t_max = 20;

  void validate() const {
    if (!(delta > 0.0)) throw InvalidArgument("CD delta must be positive");
    if (t_max < 1) throw InvalidArgument("CD t_max must be at least 1");
  }
};

struct FitOptions {
  OptimOptions optim;
  LassoOptions lasso;
  /// Finite differences instead of the analytic theta gradient (testing).
  bool numeric_gradient = false;
};

/// A sub-step failed inside the coordinate descent.
class FitError : public NumericalFailure {
 public:
  FitError(const std::string& what, int iteration, std::vector<CdStep> partial)
      : NumericalFailure(what), iteration_(iteration), partial_(std::move(partial)) {}

  [[nodiscard]] int iteration() const noexcept { return iteration_; }
  [[nodiscard]] const std::vector<CdStep>& partial_trace() const noexcept { return partial_; }

 private:
  int iteration_;
  std::vector<CdStep> partial_;
};

/// Deterministic starting point: ranges a quarter of the domain diameter,
/// every variance and the nugget s2 / (q + 1), where s2 is the residual
/// variance of an ordinary least squares fit of y on X (var(y) when p = 0).
/// Clamped into the bounds.
inline Eigen::VectorXd default_theta_init(const SvcLikelihood& lik, const CovarianceBounds& bounds) {
  const Dataset& data = lik.data();
  const Eigen::Index q = data.q();
  const Eigen::Index n = data.n();
  const double diameter = lik.distances().size() > 0 ? lik.distances().maxCoeff() : 1.0;
  double var = 1.0;
  if (data.p() > 0 && n > data.p()) {
    Eigen::VectorXd r = data.y;
    try {
      r -= data.X * whitened_least_squares(data.y, data.X);
      var = r.squaredNorm() / static_cast<double>(n - data.p());
    } catch (const SingularDesign&) {
      var = (data.y.array() - data.y.mean()).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    }
  } else if (n > 1) {
    var = (data.y.array() - data.y.mean()).square().sum() / static_cast<double>(n - 1);
  }
  if (!(var > 0.0) || !std::isfinite(var)) var = 1.0;
  Eigen::VectorXd theta(theta_index::size(q));
  for (Eigen::Index k = 0; k < q; ++k) {
    theta(theta_index::range(k)) = diameter > 0.0 ? diameter / 4.0 : 1.0;
    theta(theta_index::variance(k)) = var / static_cast<double>(q + 1);
  }
  theta(theta_index::nugget(q)) = var / static_cast<double>(q + 1);
  return bounds.box(q).project(theta);
}

namespace detail {

inline double relative_l1_change(const Eigen::VectorXd& next, const Eigen::VectorXd& prev) {
  const double denom = prev.lpNorm<1>();
  const double num = (next - prev).lpNorm<1>();
  if (denom == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / denom;
}

/// Block coordinate descent on -pl(mu, theta): mean step by GLS (when
/// `penalized_mean` is false) or whitened weighted LASSO, covariance step by
/// box-constrained quasi-Newton on f(theta | mu).
inline FitResult coordinate_descent(const SvcLikelihood& lik, const CovarianceBounds& cov_bounds,
                                    const PenaltyConfig& pen, Eigen::VectorXd mu, Eigen::VectorXd theta,
                                    const CdConfig& cd, const FitOptions& opts, bool penalized_mean) {
  cd.validate();
  const Dataset& data = lik.data();
  const Eigen::Index q = data.q();
  const Eigen::Index p = data.p();
  const double n = static_cast<double>(data.n());

  BoxBounds box = cov_bounds.box(q);
  const Eigen::VectorXd lv = pen.effective_var();
  const Eigen::VectorXd lm = pen.effective_mu();
  for (Eigen::Index k = 0; k < q; ++k) {
    if (std::isinf(lv(k))) {
      box.lower(theta_index::variance(k)) = 0.0;
      box.upper(theta_index::variance(k)) = 0.0;
    }
  }
  theta = box.project(theta);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::isinf(lm(j))) mu(j) = 0.0;
  }

  auto pen_loglik = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& t) {
    return lik.log_likelihood(m, t) - n * penalty_sum(SvcParams::from_theta(m, t), pen);
  };

  FitResult out;
  out.n = data.n();
  out.trace.push_back({0, mu, theta, pen_loglik(mu, theta)});

  for (int t = 1; t <= cd.t_max; ++t) {
    try {
      if (p > 0) {
        const WhitenedProblem w = whiten(data.y, data.X, lik.sigma_y(theta));
        mu = penalized_mean ? weighted_lasso(w.y_tilde, w.X_tilde, lm, mu, opts.lasso)
                            : whitened_least_squares(w.y_tilde, w.X_tilde);
      }
      const Eigen::VectorXd r = lik.residual(mu);
      Objective objective;
      if (opts.numeric_gradient) {
        objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
          auto f = [&](const Eigen::VectorXd& z) { return neg_pll_theta(lik, z, mu, pen); };
          if (g != nullptr) *g = finite_difference_gradient(f, x, &box);
          return f(x);
        };
      } else {
        objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
          return neg_pll_theta(lik, x, mu, pen, g);
        };
      }
      const OptimReport rep = minimize_box(objective, theta, box, opts.optim);
      const double change = relative_l1_change(rep.x_star, theta);
      theta = rep.x_star;
      out.trace.push_back({t, mu, theta, pen_loglik(mu, theta)});
      if (change < cd.delta) {
        out.converged = true;
        break;
      }
    } catch (const ConvergenceError& e) {
      throw FitError("CD iteration " + std::to_string(t) + ": " + e.what(), t, out.trace);
    } catch (const NumericalFailure& e) {
      throw FitError("CD iteration " + std::to_string(t) + ": " + e.what(), t, out.trace);
    }
  }

  out.params = SvcParams::from_theta(mu, theta);
  out.loglik = lik.log_likelihood(mu, theta);
  out.pen_loglik = out.loglik - n * penalty_sum(out.params, pen);
  out.bic = bic(out);
  return out;
}

}  // namespace detail

/// Maximum likelihood by alternating GLS for mu and box-constrained
/// minimization over theta, under the same stopping rule as the penalized fit.
inline FitResult fit_mle(const SvcLikelihood& lik, const CovarianceBounds& bounds,
                         const std::optional<Eigen::VectorXd>& theta_init = std::nullopt,
                         const CdConfig& cd = {}, const FitOptions& opts = {}) {
  const Dataset& data = lik.data();
  const Eigen::VectorXd theta0 = theta_init ? bounds.box(data.q()).project(*theta_init)
                                            : default_theta_init(lik, bounds);
  if (theta0.size() != theta_index::size(data.q())) throw InvalidArgument("fit_mle: theta_init has wrong length");
  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(data.p());
  if (data.p() > 0) mu0 = gls(data.y, data.X, lik.sigma_y(theta0));
  return detail::coordinate_descent(lik, bounds, PenaltyConfig::none(data.p(), data.q()), mu0, theta0, cd,
                                    opts, false);
}

inline FitResult fit_mle(const Dataset& data, const KernelSpec& spec, const AnisotropyMatrix& A,
                         const CovarianceBounds& bounds,
                         const std::optional<Eigen::VectorXd>& theta_init = std::nullopt,
                         const CdConfig& cd = {}, const FitOptions& opts = {}) {
  return fit_mle(SvcLikelihood(data, spec, A), bounds, theta_init, cd, opts);
}

struct AdaptiveWeights {
  Eigen::VectorXd mu;
  Eigen::VectorXd var;
};

/// 1 / |estimate|, with estimates below eps mapped to an infinite weight.
inline AdaptiveWeights adaptive_weights(const FitResult& mle, double eps = 1e-10) {
  const double inf = std::numeric_limits<double>::infinity();
  AdaptiveWeights w;
  w.mu.resize(mle.params.p());
  for (Eigen::Index j = 0; j < w.mu.size(); ++j) {
    const double a = std::abs(mle.params.mu(j));
    w.mu(j) = a < eps ? inf : 1.0 / a;
  }
  w.var.resize(mle.params.q());
  for (Eigen::Index k = 0; k < w.var.size(); ++k) {
    const double a = std::abs(mle.params.gp[k].variance);
    w.var(k) = a < eps ? inf : 1.0 / a;
  }
  return w;
}

struct LambdaPair {
  double mu = 0.0;
  double theta = 0.0;
};

inline PenaltyConfig make_penalty(LambdaPair lambda, const AdaptiveWeights& w) {
  return {lambda.mu, lambda.theta, w.mu, w.var};
}

/// Penalized maximum likelihood by block coordinate descent started at the
/// ML estimate, with adaptive LASSO weights taken from that estimate.
inline FitResult fit_pmle(const SvcLikelihood& lik, const CovarianceBounds& bounds, LambdaPair lambda,
                          const FitResult& mle, const CdConfig& cd = {}, const FitOptions& opts = {}) {
  if (!(lambda.mu >= 0.0) || !(lambda.theta >= 0.0)) throw InvalidArgument("fit_pmle: negative shrinkage");
  const Dataset& data = lik.data();
  if (mle.params.p() != data.p() || mle.params.q() != data.q()) {
    throw InvalidArgument("fit_pmle: ML estimate does not match the data dimensions");
  }
  const PenaltyConfig pen = make_penalty(lambda, adaptive_weights(mle));
  return detail::coordinate_descent(lik, bounds, pen, mle.params.mu, mle.params.theta(), cd, opts, true);
}

inline FitResult fit_pmle(const Dataset& data, const KernelSpec& spec, const AnisotropyMatrix& A,
                          const CovarianceBounds& bounds, LambdaPair lambda, const FitResult& mle,
                          const CdConfig& cd = {}, const FitOptions& opts = {}) {
  return fit_pmle(SvcLikelihood(data, spec, A), bounds, lambda, mle, cd, opts);
}

}  // namespace svcsel
