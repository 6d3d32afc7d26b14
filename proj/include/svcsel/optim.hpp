#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "svcsel/error.hpp"

namespace svcsel {

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static BoxBounds unbounded(Eigen::Index m) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Eigen::VectorXd::Constant(m, -inf), Eigen::VectorXd::Constant(m, inf)};
  }

  [[nodiscard]] Eigen::Index size() const noexcept { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size()) throw InvalidArgument("bounds: lower and upper differ in length");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
        throw InvalidArgument("bounds: lower > upper at index " + std::to_string(i));
      }
    }
  }

  [[nodiscard]] bool contains(const Eigen::VectorXd& x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x(i) >= lower(i) && x(i) <= upper(i))) return false;
    }
    return true;
  }

  [[nodiscard]] Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
};

enum class Termination { GradTol, FuncTol, MaxIter };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::GradTol: return "grad_tol";
    case Termination::FuncTol: return "func_tol";
    case Termination::MaxIter: return "max_iter";
  }
  return "unknown";
}

struct OptimReport {
  Eigen::VectorXd x_star;
  double f_star = 0.0;
  int n_evals = 0;
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::MaxIter;
};

struct OptimOptions {
  int max_iter = 500;
  int memory = 6;
  /// Projected-gradient tolerance, relative: ||P(x - g) - x||_inf <= gtol * max(1, |f|).
  double gtol = 1e-8;
  /// Relative decrease below which the search stops.
  double ftol = 1e-12;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

/// Objective returning f(x) and, when `grad` is non-null, writing the gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// Central finite-difference gradient, h = rel_step * max(1, |x_i|), clipped
/// to stay inside `bounds` (one-sided at a bound).
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, const BoxBounds* bounds = nullptr,
                                                  double rel_step = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x(i)));
    double hi = x(i) + h;
    double lo = x(i) - h;
    if (bounds != nullptr) {
      hi = std::min(hi, bounds->upper(i));
      lo = std::max(lo, bounds->lower(i));
    }
    xp(i) = hi;
    const double fh = f(xp);
    xp(i) = lo;
    const double fl = f(xp);
    xp(i) = x(i);
    g(i) = (hi > lo) ? (fh - fl) / (hi - lo) : 0.0;
  }
  return g;
}

namespace detail {

// Two-loop recursion on the free subspace: components flagged in `fixed` are
// zero in the result, and gradient components that are exactly zero stay
// zero provided the stored pairs have zero there too.
inline Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                       const std::deque<Eigen::VectorXd>& y,
                                       const Eigen::Array<bool, Eigen::Dynamic, 1>& fixed) {
  auto mask = [&](Eigen::VectorXd v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (fixed(i)) v(i) = 0.0;
    }
    return v;
  };
  Eigen::VectorXd q = mask(g);
  const std::size_t m = s.size();
  std::vector<double> alpha(m), rho(m);
  std::vector<Eigen::VectorXd> sm(m), ym(m);
  for (std::size_t i = 0; i < m; ++i) {
    sm[i] = mask(s[i]);
    ym[i] = mask(y[i]);
    const double sy = sm[i].dot(ym[i]);
    rho[i] = sy > 0.0 ? 1.0 / sy : 0.0;
  }
  for (std::size_t i = m; i-- > 0;) {
    alpha[i] = rho[i] * sm[i].dot(q);
    q -= alpha[i] * ym[i];
  }
  double gamma = 1.0;
  if (m > 0) {
    const double yy = ym[m - 1].squaredNorm();
    const double sy = sm[m - 1].dot(ym[m - 1]);
    if (yy > 0.0 && sy > 0.0) gamma = sy / yy;
  }
  Eigen::VectorXd r = gamma * q;
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = rho[i] * ym[i].dot(r);
    r += sm[i] * (alpha[i] - beta);
  }
  return -mask(r);
}

}  // namespace detail

/// Projected-gradient limited-memory BFGS over a box. Every iterate is
/// feasible by projection; variables sitting on a bound with the gradient
/// pointing outward are frozen for the step. Quasi-Newton pairs are only
/// stored when they satisfy the curvature condition.
inline OptimReport minimize_box(const Objective& fg, const Eigen::VectorXd& x0, const BoxBounds& bounds,
                                const OptimOptions& opts = {}) {
  bounds.validate();
  const Eigen::Index m = x0.size();
  if (bounds.size() != m) throw InvalidArgument("minimize_box: bounds size differs from x0");
  if (!bounds.contains(x0)) throw InvalidArgument("minimize_box: x0 outside bounds");

  OptimReport rep;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(m);
  double f = fg(x, &g);
  rep.n_evals = 1;
  if (!std::isfinite(f) || !g.allFinite()) {
    throw LineSearchFailure("minimize_box: objective or gradient not finite at x0", x, f);
  }

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  auto finish = [&](Termination t, bool ok) {
    rep.x_star = x;
    rep.f_star = f;
    rep.termination = t;
    rep.converged = ok;
    return rep;
  };

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    rep.iterations = iter;
    const Eigen::VectorXd pg = bounds.project(x - g) - x;
    if (pg.lpNorm<Eigen::Infinity>() <= opts.gtol * std::max(1.0, std::abs(f))) {
      return finish(Termination::GradTol, true);
    }

    Eigen::Array<bool, Eigen::Dynamic, 1> fixed(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      fixed(i) = bounds.lower(i) == bounds.upper(i) || (x(i) <= bounds.lower(i) && g(i) > 0.0) ||
                 (x(i) >= bounds.upper(i) && g(i) < 0.0);
    }

    Eigen::VectorXd d = detail::lbfgs_direction(g, s_hist, y_hist, fixed);
    double slope = g.dot(d);
    if (!(slope < 0.0) || !d.allFinite()) {
      s_hist.clear();
      y_hist.clear();
      d = detail::lbfgs_direction(g, s_hist, y_hist, fixed);
      slope = g.dot(d);
      if (!(slope < 0.0)) return finish(Termination::GradTol, true);
    }

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));

    bool accepted = false;
    bool any_finite = false;
    int tried = 0;
    Eigen::VectorXd x_new, g_new(m);
    double f_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = bounds.project(x + step * d);
      // keep zero-direction coordinates bit-identical
      for (Eigen::Index i = 0; i < m; ++i) {
        if (d(i) == 0.0) x_new(i) = x(i);
      }
      if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fg(x_new, &g_new);
      ++rep.n_evals;
      ++tried;
      const bool finite = std::isfinite(f_new) && g_new.allFinite();
      any_finite = any_finite || finite;
      const double pred = g.dot(x_new - x);
      if (finite && f_new <= f + opts.armijo * pred) {
        accepted = true;
        break;
      }
      if (finite && pred < 0.0) {
        // minimizer of the quadratic through f, the directional slope and f_new,
        // kept within [0.1, 0.5] of the current step
        const double denom = 2.0 * (f_new - f - pred);
        const double ratio = denom > 0.0 ? -pred / denom : 0.5;
        step *= std::clamp(ratio, 0.1, 0.5);
      } else {
        step *= finite ? 0.5 : 0.1;
      }
    }

    if (!accepted) {
      if (!s_hist.empty()) {
        // retry from steepest descent before giving up
        s_hist.clear();
        y_hist.clear();
        continue;
      }
      if (tried > 0 && !any_finite) {
        throw LineSearchFailure("minimize_box: no finite trial point along the search direction", x, f);
      }
      return finish(Termination::FuncTol, true);
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * yv.squaredNorm() && sy > 0.0) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const double decrease = f - f_new;
    const double scale = std::max({std::abs(f), std::abs(f_new), 1.0});
    x = x_new;
    g = g_new;
    f = f_new;
    if (decrease <= opts.ftol * scale) {
      rep.iterations = iter + 1;
      return finish(Termination::FuncTol, true);
    }
  }
  rep.iterations = opts.max_iter;
  return finish(Termination::MaxIter, false);
}

/// Convenience overload with separate value and gradient callables.
inline OptimReport minimize_box(const std::function<double(const Eigen::VectorXd&)>& f,
                                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                const Eigen::VectorXd& x0, const BoxBounds& bounds,
                                const OptimOptions& opts = {}) {
  return minimize_box(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        const double v = f(x);
        if (g != nullptr) *g = grad(x);
        return v;
      },
      x0, bounds, opts);
}

}  // namespace svcsel
