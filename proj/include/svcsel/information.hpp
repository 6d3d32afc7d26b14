#pragma once

#include <cmath>

#include <Eigen/Core>

#include "svcsel/error.hpp"
#include "svcsel/model.hpp"

namespace svcsel {

/// Support sizes ||mu||_0 and ||sigma^2||_0.
struct SupportSize {
  int mu = 0;
  int var = 0;
};

/// Exact-zero counting: a mean is zero only if it is literally 0.0 (pinned or
/// soft-thresholded), a variance only if it sits on its 0 bound.
inline SupportSize count_nonzero(const SvcParams& params) {
  SupportSize s;
  for (Eigen::Index j = 0; j < params.mu.size(); ++j) {
    if (params.mu(j) != 0.0) ++s.mu;
  }
  for (const auto& g : params.gp) {
    if (g.variance != 0.0) ++s.var;
  }
  return s;
}

/// -2 loglik + log(n) (||mu||_0 + ||sigma^2||_0).
inline double bic(double loglik, int nonzero_mu, int nonzero_var, Eigen::Index n) {
  if (n < 1) throw InvalidArgument("bic: n must be positive");
  return -2.0 * loglik + std::log(static_cast<double>(n)) * static_cast<double>(nonzero_mu + nonzero_var);
}

inline double bic(const FitResult& fit) {
  const SupportSize s = count_nonzero(fit.params);
  return bic(fit.loglik, s.mu, s.var, fit.n);
}

}  // namespace svcsel
