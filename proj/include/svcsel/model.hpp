#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "svcsel/error.hpp"
#include "svcsel/kernels.hpp"
#include "svcsel/linalg.hpp"

namespace svcsel {

/// Response, fixed-effect design X (n x p), SVC covariates W (n x q, column k
/// is w^(k)) and observation locations (n x d).
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd W;
  Locations locations;
  std::vector<std::string> fixed_names;
  std::vector<std::string> svc_names;

  [[nodiscard]] Eigen::Index n() const noexcept { return y.size(); }
  [[nodiscard]] Eigen::Index p() const noexcept { return X.cols(); }
  [[nodiscard]] Eigen::Index q() const noexcept { return W.cols(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return locations.cols(); }

  void validate() const {
    const Eigen::Index rows = n();
    if (rows < 1) throw InvalidArgument("dataset: need at least one observation");
    if (X.rows() != rows || W.rows() != rows || locations.rows() != rows) {
      throw InvalidArgument("dataset: row counts of y, X, W and locations differ");
    }
    if (p() < 1 && q() < 1) throw InvalidArgument("dataset: need p >= 1 or q >= 1");
    if (locations.cols() < 1) throw InvalidArgument("dataset: locations need at least one coordinate");
    if (!y.allFinite() || !X.allFinite() || !W.allFinite() || !locations.allFinite()) {
      throw InvalidArgument("dataset: non-finite entries");
    }
  }

  /// Rows listed in `idx`, in that order.
  [[nodiscard]] Dataset rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.y = y(idx);
    out.X = X(idx, Eigen::all);
    out.W = W(idx, Eigen::all);
    out.locations = locations(idx, Eigen::all);
    out.fixed_names = fixed_names;
    out.svc_names = svc_names;
    return out;
  }

  /// Restrict to the listed fixed-effect and SVC columns.
  [[nodiscard]] Dataset columns(const std::vector<Eigen::Index>& fixed,
                                const std::vector<Eigen::Index>& svc) const {
    Dataset out;
    out.y = y;
    out.X = X(Eigen::all, fixed);
    out.W = W(Eigen::all, svc);
    out.locations = locations;
    for (auto j : fixed) {
      if (static_cast<std::size_t>(j) < fixed_names.size()) out.fixed_names.push_back(fixed_names[j]);
    }
    for (auto k : svc) {
      if (static_cast<std::size_t>(k) < svc_names.size()) out.svc_names.push_back(svc_names[k]);
    }
    return out;
  }
};

/// Layout of the covariance parameter vector theta:
/// (rho_1, sigma_1^2, ..., rho_q, sigma_q^2, tau^2).
namespace theta_index {
constexpr Eigen::Index range(Eigen::Index k) noexcept { return 2 * k; }
constexpr Eigen::Index variance(Eigen::Index k) noexcept { return 2 * k + 1; }
constexpr Eigen::Index nugget(Eigen::Index q) noexcept { return 2 * q; }
constexpr Eigen::Index size(Eigen::Index q) noexcept { return 2 * q + 1; }
}  // namespace theta_index

/// omega = (mu, theta).
struct SvcParams {
  Eigen::VectorXd mu;
  std::vector<GpParams> gp;
  double nugget = 1.0;

  [[nodiscard]] Eigen::Index p() const noexcept { return mu.size(); }
  [[nodiscard]] Eigen::Index q() const noexcept { return static_cast<Eigen::Index>(gp.size()); }

  [[nodiscard]] Eigen::VectorXd theta() const {
    Eigen::VectorXd t(theta_index::size(q()));
    for (Eigen::Index k = 0; k < q(); ++k) {
      t(theta_index::range(k)) = gp[k].range;
      t(theta_index::variance(k)) = gp[k].variance;
    }
    t(theta_index::nugget(q())) = nugget;
    return t;
  }

  static SvcParams from_theta(Eigen::VectorXd mu, const Eigen::VectorXd& theta) {
    if (theta.size() < 1 || theta.size() % 2 == 0) {
      throw InvalidArgument("theta must have odd length 2q+1");
    }
    SvcParams out;
    out.mu = std::move(mu);
    const Eigen::Index q = (theta.size() - 1) / 2;
    out.gp.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
      out.gp[k] = {theta(theta_index::range(k)), theta(theta_index::variance(k))};
    }
    out.nugget = theta(theta_index::nugget(q));
    return out;
  }

  /// Membership in the parameter space: tau^2 > 0, sigma_k^2 >= 0, rho_k > 0.
  void validate() const {
    if (!(nugget > 0.0) || !std::isfinite(nugget)) throw InvalidArgument("nugget must be positive");
    if (!mu.allFinite()) throw InvalidArgument("fixed effects must be finite");
    for (const auto& g : gp) detail::check_gp(g);
  }
};

/// Shrinkage pair plus adaptive per-parameter multipliers. The effective
/// penalty of a coordinate is lambda * weight, and an infinite weight pins
/// the coordinate at zero whatever lambda is.
struct PenaltyConfig {
  double lambda_mu = 0.0;
  double lambda_theta = 0.0;
  Eigen::VectorXd weights_mu;
  Eigen::VectorXd weights_var;

  static PenaltyConfig none(Eigen::Index p, Eigen::Index q) {
    return {0.0, 0.0, Eigen::VectorXd::Ones(p), Eigen::VectorXd::Ones(q)};
  }

  [[nodiscard]] Eigen::VectorXd effective_mu() const { return scale(lambda_mu, weights_mu); }
  [[nodiscard]] Eigen::VectorXd effective_var() const { return scale(lambda_theta, weights_var); }

 private:
  static Eigen::VectorXd scale(double lambda, const Eigen::VectorXd& w) {
    Eigen::VectorXd out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      out(i) = std::isinf(w(i)) ? std::numeric_limits<double>::infinity() : lambda * w(i);
    }
    return out;
  }
};

/// One coordinate-descent iterate; t = 0 is the starting point.
struct CdStep {
  int t = 0;
  Eigen::VectorXd mu;
  Eigen::VectorXd theta;
  double pen_loglik = 0.0;
};

struct FitResult {
  SvcParams params;
  double loglik = 0.0;
  double pen_loglik = 0.0;
  double bic = 0.0;
  std::vector<CdStep> trace;
  bool converged = false;
  Eigen::Index n = 0;

  /// Number of CD iterations T (trace holds t = 0..T).
  [[nodiscard]] int iterations() const noexcept {
    return trace.empty() ? 0 : static_cast<int>(trace.size()) - 1;
  }

  /// A range is not identifiable when its variance is exactly zero.
  [[nodiscard]] bool range_identifiable(Eigen::Index k) const { return params.gp[k].variance != 0.0; }
};

/// sum_j pen_j |mu_j| + sum_k pen_{p+k} sigma_k^2 with 0 * inf = 0 (a pinned
/// coordinate sitting at zero costs nothing).
inline double penalty_sum(const SvcParams& params, const PenaltyConfig& pen) {
  const Eigen::VectorXd lm = pen.effective_mu();
  const Eigen::VectorXd lv = pen.effective_var();
  if (lm.size() != params.p() || lv.size() != params.q()) {
    throw InvalidArgument("penalty dimensions do not match parameters");
  }
  double s = 0.0;
  for (Eigen::Index j = 0; j < lm.size(); ++j) {
    if (params.mu(j) != 0.0) s += lm(j) * std::abs(params.mu(j));
  }
  for (Eigen::Index k = 0; k < lv.size(); ++k) {
    if (params.gp[k].variance != 0.0) s += lv(k) * std::abs(params.gp[k].variance);
  }
  return s;
}

/// Likelihood machinery for one dataset. Distances are computed once and
/// reused across evaluations; every member is const and thread-safe.
class SvcLikelihood {
 public:
  SvcLikelihood(Dataset data, KernelSpec spec, AnisotropyMatrix A = {})
      : data_(std::move(data)), spec_(spec), aniso_(std::move(A)) {
    data_.validate();
    aniso_.check_dim(data_.dim());
    dist_ = distance_matrix(data_.locations, aniso_);
    const Eigen::Index n = data_.n();
    tri_.resize(n * (n - 1) / 2, 1);
    Eigen::Index idx = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j + 1; i < n; ++i) tri_(idx++, 0) = dist_(i, j);
    }
  }

  [[nodiscard]] const Dataset& data() const noexcept { return data_; }
  [[nodiscard]] const KernelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const AnisotropyMatrix& anisotropy() const noexcept { return aniso_; }
  [[nodiscard]] const Eigen::MatrixXd& distances() const noexcept { return dist_; }

  [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& mu) const {
    if (mu.size() != data_.p()) throw InvalidArgument("mu has wrong length");
    if (mu.size() == 0) return data_.y;
    return data_.y - data_.X * mu;
  }

  /// Sigma_Y(theta) = sum_k (w_k w_k^T) .* Sigma_k + tau^2 I.
  [[nodiscard]] Eigen::MatrixXd sigma_y(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    Eigen::MatrixXd sigma = assemble(theta, nullptr);
    if (!sigma.allFinite()) throw NumericalFailure("Sigma_Y has non-finite entries");
    return sigma;
  }

  /// Log-likelihood at (mu, theta).
  [[nodiscard]] double log_likelihood(const Eigen::VectorXd& mu, const Eigen::VectorXd& theta) const {
    return -neg_log_likelihood(theta, residual(mu), nullptr);
  }

  /// -loglik as a function of theta for a fixed residual r = y - X mu.
  /// When `grad` is non-null it receives d(-loglik)/d theta in theta order:
  /// 0.5 tr(Sigma^-1 dS) - 0.5 r' Sigma^-1 dS Sigma^-1 r for each parameter.
  double neg_log_likelihood(const Eigen::VectorXd& theta, const Eigen::VectorXd& r,
                            Eigen::VectorXd* grad) const {
    check_theta(theta);
    const Eigen::Index n = data_.n();
    const Eigen::Index q = data_.q();
    if (r.size() != n) throw InvalidArgument("residual has wrong length");

    std::vector<Eigen::ArrayXXd> corr;
    const Eigen::MatrixXd sigma = assemble(theta, grad != nullptr ? &corr : nullptr);
    const auto llt = cholesky(sigma);
    const Eigen::VectorXd alpha = llt.solve(r);
    const double value =
        0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det(llt) + r.dot(alpha));
    if (!std::isfinite(value)) throw NumericalFailure("log-likelihood is not finite");

    if (grad != nullptr) {
      grad->resize(theta.size());
      // M = Sigma^-1 - alpha alpha^T, so each component is 0.5 <M, dSigma>.
      Eigen::MatrixXd m = llt.solve(Eigen::MatrixXd::Identity(n, n));
      m.noalias() -= alpha * alpha.transpose();
      // strict lower triangle of (w_k w_k^T) .* M, packed like tri_
      Eigen::ArrayXXd packed(tri_.rows(), 1);
      for (Eigen::Index k = 0; k < q; ++k) {
        const double var = theta(theta_index::variance(k));
        const double range = theta(theta_index::range(k));
        const auto w = data_.W.col(k);
        Eigen::Index idx = 0;
        double diag = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          diag += m(j, j) * w(j) * w(j);
          for (Eigen::Index i = j + 1; i < n; ++i) packed(idx++, 0) = m(i, j) * w(i) * w(j);
        }
        const auto& c = corr[static_cast<std::size_t>(k)];
        (*grad)(theta_index::variance(k)) = 0.5 * diag + (packed * c).sum();
        if (var == 0.0) {
          (*grad)(theta_index::range(k)) = 0.0;
        } else {
          const Eigen::ArrayXXd u = tri_ / range;
          (*grad)(theta_index::range(k)) = var * (packed * range_derivative_array(u, c, range, spec_)).sum();
        }
      }
      (*grad)(theta_index::nugget(q)) = 0.5 * m.trace();
    }
    return value;
  }

 private:
  // Sigma_Y from the packed strict lower triangle of the distances. The unit
  // diagonal of every correlation matrix is added directly. Packed
  // correlations are kept in `corr` when requested (all k, zero variances too).
  [[nodiscard]] Eigen::MatrixXd assemble(const Eigen::VectorXd& theta, std::vector<Eigen::ArrayXXd>* corr) const {
    const Eigen::Index n = data_.n();
    const Eigen::Index q = data_.q();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(n, n);
    if (corr != nullptr) corr->resize(static_cast<std::size_t>(q));
    for (Eigen::Index k = 0; k < q; ++k) {
      const double var = theta(theta_index::variance(k));
      if (var == 0.0 && corr == nullptr) continue;
      Eigen::ArrayXXd c = correlation_array(tri_ / theta(theta_index::range(k)), spec_);
      if (var != 0.0) {
        const auto w = data_.W.col(k);
        Eigen::Index idx = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const double vj = var * w(j);
          sigma(j, j) += vj * w(j);
          for (Eigen::Index i = j + 1; i < n; ++i) sigma(i, j) += vj * w(i) * c(idx++, 0);
        }
      }
      if (corr != nullptr) (*corr)[static_cast<std::size_t>(k)] = std::move(c);
    }
    sigma.diagonal().array() += theta(theta_index::nugget(q));
    sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
    return sigma;
  }

  void check_theta(const Eigen::VectorXd& theta) const {
    const Eigen::Index q = data_.q();
    if (theta.size() != theta_index::size(q)) throw InvalidArgument("theta has wrong length");
    for (Eigen::Index k = 0; k < q; ++k) {
      detail::check_gp({theta(theta_index::range(k)), theta(theta_index::variance(k))});
    }
    const double tau2 = theta(theta_index::nugget(q));
    if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw InvalidArgument("nugget must be positive");
  }

  Dataset data_;
  KernelSpec spec_;
  AnisotropyMatrix aniso_;
  Eigen::MatrixXd dist_;
  Eigen::ArrayXXd tri_;
};

inline Eigen::MatrixXd assemble_sigma_y(const Dataset& data, const SvcParams& params,
                                        const KernelSpec& spec, const AnisotropyMatrix& A = {}) {
  if (params.q() != data.q()) throw InvalidArgument("params and data disagree on q");
  return SvcLikelihood(data, spec, A).sigma_y(params.theta());
}

inline double log_likelihood(const Dataset& data, const SvcParams& params, const KernelSpec& spec,
                             const AnisotropyMatrix& A = {}) {
  params.validate();
  SvcLikelihood lik(data, spec, A);
  return lik.log_likelihood(params.mu, params.theta());
}

/// loglik - n * (sum_j lambda_j |mu_j| + sum_k lambda_{p+k} |sigma_k^2|).
inline double penalized_log_likelihood(const Dataset& data, const SvcParams& params,
                                       const PenaltyConfig& pen, const KernelSpec& spec,
                                       const AnisotropyMatrix& A = {}) {
  const double ll = log_likelihood(data, params, spec, A);
  return ll - static_cast<double>(data.n()) * penalty_sum(params, pen);
}

/// Covariance-step objective f(theta) = -loglik(mu, theta) + n sum_k lambda_{p+k} sigma_k^2.
/// Variances are nonnegative on the feasible set, so the penalty is linear there.
inline double neg_pll_theta(const SvcLikelihood& lik, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& mu, const PenaltyConfig& pen,
                            Eigen::VectorXd* grad = nullptr) {
  const Eigen::Index q = lik.data().q();
  const Eigen::VectorXd lv = pen.effective_var();
  if (lv.size() != q) throw InvalidArgument("penalty dimensions do not match q");
  double value = lik.neg_log_likelihood(theta, lik.residual(mu), grad);
  const double n = static_cast<double>(lik.data().n());
  for (Eigen::Index k = 0; k < q; ++k) {
    const double var = theta(theta_index::variance(k));
    if (std::isinf(lv(k))) {
      // pinned coordinate: only admissible at zero, contributes no slope
      if (var != 0.0) value = std::numeric_limits<double>::infinity();
      continue;
    }
    value += n * lv(k) * var;
    if (grad != nullptr) (*grad)(theta_index::variance(k)) += n * lv(k);
  }
  return value;
}

inline Eigen::VectorXd neg_pll_theta_gradient(const Dataset& data, const Eigen::VectorXd& theta,
                                              const Eigen::VectorXd& mu, const PenaltyConfig& pen,
                                              const KernelSpec& spec, const AnisotropyMatrix& A = {}) {
  SvcLikelihood lik(data, spec, A);
  Eigen::VectorXd grad;
  neg_pll_theta(lik, theta, mu, pen, &grad);
  return grad;
}

}  // namespace svcsel
