#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "svcsel/error.hpp"
#include "svcsel/information.hpp"
#include "svcsel/kernels.hpp"
#include "svcsel/linalg.hpp"
#include "svcsel/parallel.hpp"
#include "svcsel/pmle.hpp"

namespace svcsel {

/// Latin hypercube sample of `n` points in the box [lower, upper]: each
/// coordinate's n equal-probability strata hold exactly one point. With
/// `log_scale` the strata are equal-width in log10 of the bounds.
template <typename Rng>
Eigen::MatrixXd latin_hypercube(int n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, Rng& rng,
                                bool log_scale = false) {
  if (n < 1) throw InvalidArgument("latin_hypercube: need at least one point");
  if (lower.size() != upper.size()) throw InvalidArgument("latin_hypercube: bound sizes differ");
  const Eigen::Index d = lower.size();
  for (Eigen::Index c = 0; c < d; ++c) {
    if (!(lower(c) < upper(c))) throw InvalidArgument("latin_hypercube: empty interval");
    if (log_scale && !(lower(c) > 0.0)) throw InvalidArgument("latin_hypercube: log scale needs positive bounds");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd out(n, d);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < d; ++c) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lo = log_scale ? std::log10(lower(c)) : lower(c);
    const double hi = log_scale ? std::log10(upper(c)) : upper(c);
    for (int i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + unif(rng)) / static_cast<double>(n);
      const double v = lo + u * (hi - lo);
      out(i, c) = log_scale ? std::pow(10.0, v) : v;
    }
  }
  return out;
}

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Kriging model with constant trend and Matern-3/2 covariance
/// sigma^2 (R + g I); the nugget variance is g sigma^2.
class Surrogate {
 public:
  [[nodiscard]] const Eigen::MatrixXd& design() const noexcept { return design_; }
  [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
  [[nodiscard]] GpParams kernel() const noexcept { return {range_, variance_}; }
  [[nodiscard]] double nugget() const noexcept { return nugget_ratio_ * variance_; }
  [[nodiscard]] double nugget_ratio() const noexcept { return nugget_ratio_; }
  [[nodiscard]] double trend() const noexcept { return trend_; }
  [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }

  [[nodiscard]] Prediction predict(const Eigen::VectorXd& x) const {
    if (x.size() != design_.cols()) throw InvalidArgument("surrogate: point has wrong dimension");
    if (degenerate_) return {trend_, 0.0};
    Eigen::VectorXd r(design_.rows());
    for (Eigen::Index i = 0; i < design_.rows(); ++i) {
      r(i) = correlation((design_.row(i).transpose() - x).norm() / range_, spec());
    }
    const Eigen::VectorXd cr = llt_.solve(r);
    const double u = 1.0 - ones_solved_.dot(r);
    const double var = variance_ * (1.0 - r.dot(cr) + u * u / ones_quad_);
    return {trend_ + r.dot(alpha_), std::max(var, 0.0)};
  }

  static KernelSpec spec() { return {KernelFamily::Matern32}; }

  // Concentrated -2 log-likelihood (up to constants) for range and nugget ratio.
  static double profile_deviance(const Eigen::MatrixXd& dist, const Eigen::VectorXd& y, double range,
                                 double ratio) {
    const Eigen::Index m = y.size();
    Eigen::MatrixXd c = correlation_array(dist.array() / range, spec()).matrix();
    c.diagonal().array() += ratio;
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
    const Eigen::VectorXd c1 = llt.solve(ones);
    const double beta = c1.dot(y) / c1.dot(ones);
    const Eigen::VectorXd e = y.array() - beta;
    const double s2 = e.dot(llt.solve(e)) / static_cast<double>(m);
    if (!(s2 > 0.0)) return std::numeric_limits<double>::infinity();
    return static_cast<double>(m) * std::log(s2) + log_det(llt);
  }

  /// Fixed-hyperparameter construction; `fit_surrogate` picks them by ML.
  static Surrogate with_parameters(Eigen::MatrixXd design, Eigen::VectorXd values, double range, double ratio) {
    Surrogate s;
    s.design_ = std::move(design);
    s.values_ = std::move(values);
    s.range_ = range;
    s.nugget_ratio_ = ratio;
    const Eigen::Index m = s.values_.size();
    Eigen::MatrixXd c = correlation_array(cross_distance_matrix(s.design_, s.design_).array() / range, spec())
                            .matrix();
    c.diagonal().array() += ratio;
    s.llt_ = cholesky(c);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
    s.ones_solved_ = s.llt_.solve(ones);
    s.ones_quad_ = s.ones_solved_.dot(ones);
    s.trend_ = s.ones_solved_.dot(s.values_) / s.ones_quad_;
    const Eigen::VectorXd e = s.values_.array() - s.trend_;
    s.alpha_ = s.llt_.solve(e);
    s.variance_ = e.dot(s.alpha_) / static_cast<double>(m);
    return s;
  }

  static Surrogate constant(Eigen::MatrixXd design, Eigen::VectorXd values) {
    Surrogate s;
    s.design_ = std::move(design);
    s.trend_ = values(0);
    s.values_ = std::move(values);
    s.degenerate_ = true;
    return s;
  }

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd values_;
  double range_ = 1.0;
  double variance_ = 0.0;
  double nugget_ratio_ = 0.0;
  double trend_ = 0.0;
  bool degenerate_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd ones_solved_;
  double ones_quad_ = 1.0;
};

struct SurrogateBounds {
  double ratio_lower = 1e-6;
  double ratio_upper = 1e-1;
  /// Range search interval as multiples of the largest design distance.
  double range_lower_factor = 1e-2;
  double range_upper_factor = 1e1;
};

/// Maximum likelihood kriging fit over (range, nugget ratio): log-grid search
/// followed by a compass refinement in log space. Design points are rows.
inline Surrogate fit_surrogate(const Eigen::MatrixXd& designs, const Eigen::VectorXd& values,
                               const SurrogateBounds& sb = {}) {
  if (designs.rows() != values.size()) throw InvalidArgument("fit_surrogate: design/value count mismatch");
  if (!values.allFinite() || !designs.allFinite()) throw InvalidArgument("fit_surrogate: non-finite input");
  const Eigen::MatrixXd dist = cross_distance_matrix(designs, designs);
  const double dmax = dist.size() > 0 ? dist.maxCoeff() : 0.0;
  if (designs.rows() < 2 || !(dmax > 0.0)) {
    throw InvalidArgument("fit_surrogate: need at least two distinct design points");
  }
  const double vmax = values.maxCoeff();
  const double vmin = values.minCoeff();
  if (vmax - vmin <= 1e-12 * std::max(1.0, std::abs(vmax))) return Surrogate::constant(designs, values);

  const double lr_lo = std::log(sb.range_lower_factor * dmax);
  const double lr_hi = std::log(sb.range_upper_factor * dmax);
  const double lg_lo = std::log(sb.ratio_lower);
  const double lg_hi = std::log(sb.ratio_upper);
  auto deviance = [&](double lr, double lg) {
    return Surrogate::profile_deviance(dist, values, std::exp(lr), std::exp(lg));
  };

  constexpr int kRangeGrid = 24;
  constexpr int kRatioGrid = 9;
  double best_lr = lr_lo;
  double best_lg = lg_hi;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kRangeGrid; ++i) {
    const double lr = lr_lo + (lr_hi - lr_lo) * i / (kRangeGrid - 1);
    for (int j = 0; j < kRatioGrid; ++j) {
      const double lg = lg_lo + (lg_hi - lg_lo) * j / (kRatioGrid - 1);
      const double v = deviance(lr, lg);
      if (v < best) {
        best = v;
        best_lr = lr;
        best_lg = lg;
      }
    }
  }
  double step_r = (lr_hi - lr_lo) / (kRangeGrid - 1);
  double step_g = (lg_hi - lg_lo) / (kRatioGrid - 1);
  while (step_r > 1e-6 || step_g > 1e-6) {
    bool improved = false;
    const double cand[4][2] = {{best_lr + step_r, best_lg}, {best_lr - step_r, best_lg},
                               {best_lr, best_lg + step_g}, {best_lr, best_lg - step_g}};
    for (const auto& c : cand) {
      const double lr = std::clamp(c[0], lr_lo, lr_hi);
      const double lg = std::clamp(c[1], lg_lo, lg_hi);
      const double v = deviance(lr, lg);
      if (v < best) {
        best = v;
        best_lr = lr;
        best_lg = lg;
        improved = true;
      }
    }
    if (!improved) {
      step_r *= 0.5;
      step_g *= 0.5;
    }
  }
  if (!std::isfinite(best)) throw NumericalFailure("fit_surrogate: no admissible hyperparameters");
  return Surrogate::with_parameters(designs, values, std::exp(best_lr), std::exp(best_lg));
}

/// E[max(xi_min - Xi, 0)] for Xi ~ N(mean, sd^2).
inline double expected_improvement(double mean, double sd, double xi_min) {
  const double diff = xi_min - mean;
  if (!(sd > 0.0)) return std::max(diff, 0.0);
  const double z = diff / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(diff * cdf + sd * pdf, 0.0);
}

inline double expected_improvement(const Surrogate& s, const Eigen::VectorXd& x, double xi_min) {
  const Prediction pr = s.predict(x);
  return expected_improvement(pr.mean, std::sqrt(pr.variance), xi_min);
}

/// Shrinkage tuning configuration. Bounds are on the raw (lambda_mu,
/// lambda_theta) scale; the search itself runs on log10 lambda.
struct TuneConfig {
  LambdaPair lower{1e-6, 1e-6};
  LambdaPair upper{1.0, 1.0};
  int n_init = 10;
  int n_iter = 10;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  int ei_restarts = 64;

  void validate() const {
    if (!(lower.mu > 0.0 && lower.theta > 0.0)) throw InvalidArgument("tune: bounds must be positive");
    if (!(lower.mu < upper.mu && lower.theta < upper.theta)) throw InvalidArgument("tune: empty bounds");
    if (n_init < 2) throw InvalidArgument("tune: n_init must be at least 2");
    if (n_iter < 0) throw InvalidArgument("tune: n_iter must be nonnegative");
    if (ei_restarts < 1) throw InvalidArgument("tune: ei_restarts must be positive");
  }
};

struct TuneEvaluation {
  int index = 0;
  LambdaPair lambda;
  double bic = std::numeric_limits<double>::infinity();
  double loglik = std::numeric_limits<double>::quiet_NaN();
  SupportSize support;
  int cd_iterations = 0;
  bool ok = false;
  bool infill = false;
  double expected_improvement = 0.0;
  std::string error;
};

struct TuneResult {
  LambdaPair best;
  double best_bic = std::numeric_limits<double>::infinity();
  int best_index = -1;
  std::optional<FitResult> best_fit;
  std::vector<TuneEvaluation> trace;
};

namespace detail {

inline Eigen::VectorXd to_log_space(LambdaPair l) {
  return Eigen::Vector2d(std::log10(l.mu), std::log10(l.theta));
}

inline LambdaPair from_log_space(const Eigen::VectorXd& x) {
  return {std::pow(10.0, x(0)), std::pow(10.0, x(1))};
}

struct InfillChoice {
  Eigen::VectorXd x;
  double ei = 0.0;
};

// Multi-start maximization of EI in log space: LHS restarts, then compass
// refinement of the best few. Falls back to the restart farthest from the
// design when EI vanishes everywhere.
template <typename Rng>
InfillChoice maximize_ei(const Surrogate& s, double xi_min, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         int restarts, Rng& rng) {
  const Eigen::MatrixXd starts = latin_hypercube(restarts, lo, hi, rng, false);
  std::vector<std::pair<double, Eigen::Index>> scored;
  for (Eigen::Index i = 0; i < starts.rows(); ++i) {
    scored.emplace_back(expected_improvement(s, starts.row(i).transpose(), xi_min), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  InfillChoice best{starts.row(scored.front().second).transpose(), scored.front().first};
  const int refine = std::min<int>(5, static_cast<int>(scored.size()));
  for (int r = 0; r < refine; ++r) {
    Eigen::VectorXd x = starts.row(scored[r].second).transpose();
    double fx = scored[r].first;
    if (!(fx > 0.0)) continue;
    Eigen::VectorXd step = 0.05 * (hi - lo);
    while (step.maxCoeff() > 1e-6 * (hi - lo).maxCoeff()) {
      bool improved = false;
      for (Eigen::Index c = 0; c < x.size(); ++c) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd y = x;
          y(c) = std::clamp(x(c) + sign * step(c), lo(c), hi(c));
          const double fy = expected_improvement(s, y, xi_min);
          if (fy > fx) {
            x = y;
            fx = fy;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (fx > best.ei) best = {x, fx};
  }
  if (best.ei > 0.0) return best;

  double far = -1.0;
  for (Eigen::Index i = 0; i < starts.rows(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < s.design().rows(); ++j) {
      nearest = std::min(nearest, (s.design().row(j) - starts.row(i)).norm());
    }
    if (nearest > far) {
      far = nearest;
      best = {starts.row(i).transpose(), 0.0};
    }
  }
  return best;
}

}  // namespace detail

/// Choose (lambda_mu, lambda_theta) minimizing the BIC of the penalized fit:
/// n_init Latin hypercube evaluations, then n_iter rounds of refitting the
/// kriging surrogate and evaluating the expected-improvement maximizer. Every
/// fit warm-starts from `mle`. A failed fit scores +inf and the search goes on.
inline TuneResult tune_shrinkage(const SvcLikelihood& lik, const CovarianceBounds& bounds, const FitResult& mle,
                                 const CdConfig& cd, const TuneConfig& cfg, const FitOptions& opts = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Eigen::VectorXd lo = detail::to_log_space(cfg.lower);
  const Eigen::VectorXd hi = detail::to_log_space(cfg.upper);

  TuneResult result;
  std::vector<std::optional<FitResult>> fits;

  auto evaluate = [&](LambdaPair lambda, TuneEvaluation& ev, std::optional<FitResult>& fit) {
    ev.lambda = lambda;
    try {
      FitResult f = fit_pmle(lik, bounds, lambda, mle, cd, opts);
      ev.bic = f.bic;
      ev.loglik = f.loglik;
      ev.support = count_nonzero(f.params);
      ev.cd_iterations = f.iterations();
      ev.ok = std::isfinite(f.bic);
      if (!ev.ok) ev.bic = std::numeric_limits<double>::infinity();
      fit = std::move(f);
    } catch (const std::exception& e) {
      ev.ok = false;
      ev.bic = std::numeric_limits<double>::infinity();
      ev.error = e.what();
    }
  };

  const Eigen::MatrixXd init = latin_hypercube(cfg.n_init, lo, hi, rng, false);
  result.trace.resize(static_cast<std::size_t>(cfg.n_init));
  fits.resize(static_cast<std::size_t>(cfg.n_init));
  parallel_for(static_cast<std::size_t>(cfg.n_init), cfg.threads, [&](std::size_t i) {
    result.trace[i].index = static_cast<int>(i);
    evaluate(detail::from_log_space(init.row(static_cast<Eigen::Index>(i)).transpose()), result.trace[i], fits[i]);
  });

  for (int it = 0; it < cfg.n_iter; ++it) {
    std::vector<Eigen::Index> finite;
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
      if (std::isfinite(result.trace[i].bic)) finite.push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd design(static_cast<Eigen::Index>(finite.size()), 2);
    Eigen::VectorXd values(static_cast<Eigen::Index>(finite.size()));
    double xi_min = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < finite.size(); ++r) {
      const auto& ev = result.trace[static_cast<std::size_t>(finite[r])];
      design.row(static_cast<Eigen::Index>(r)) = detail::to_log_space(ev.lambda).transpose();
      values(static_cast<Eigen::Index>(r)) = ev.bic;
      xi_min = std::min(xi_min, ev.bic);
    }

    Eigen::VectorXd next;
    double ei = 0.0;
    std::optional<Surrogate> surrogate;
    try {
      surrogate = fit_surrogate(design, values);
    } catch (const std::exception&) {
      surrogate.reset();
    }
    if (surrogate) {
      const auto choice = detail::maximize_ei(*surrogate, xi_min, lo, hi, cfg.ei_restarts, rng);
      next = choice.x;
      ei = choice.ei;
    } else {
      next = latin_hypercube(1, lo, hi, rng, false).row(0).transpose();
    }

    TuneEvaluation ev;
    ev.index = static_cast<int>(result.trace.size());
    ev.infill = true;
    ev.expected_improvement = ei;
    std::optional<FitResult> fit;
    evaluate(detail::from_log_space(next), ev, fit);
    result.trace.push_back(ev);
    fits.push_back(std::move(fit));
  }

  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    if (result.trace[i].bic < result.best_bic) {
      result.best_bic = result.trace[i].bic;
      result.best_index = static_cast<int>(i);
    }
  }
  if (result.best_index >= 0) {
    result.best = result.trace[static_cast<std::size_t>(result.best_index)].lambda;
    result.best_fit = fits[static_cast<std::size_t>(result.best_index)];
  }
  return result;
}

}  // namespace svcsel
