#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "svcsel/error.hpp"

namespace svcsel {

/// Observation locations, one row per point.
using Locations = Eigen::MatrixXd;

/// Half-integer Matern families with closed forms. Exponential is nu = 1/2.
enum class KernelFamily { Exponential, Matern32, Matern52 };

struct KernelSpec {
  KernelFamily family = KernelFamily::Exponential;

  [[nodiscard]] double smoothness() const noexcept {
    switch (family) {
      case KernelFamily::Exponential: return 0.5;
      case KernelFamily::Matern32: return 1.5;
      case KernelFamily::Matern52: return 2.5;
    }
    return 0.5;
  }
};

inline std::string_view to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Exponential: return "exp";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
  }
  return "exp";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "exp" || name == "exponential") return KernelFamily::Exponential;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  throw InvalidArgument("unknown kernel family '" + std::string(name) + "'");
}

/// Symmetric positive definite scaling of coordinate space. A default
/// constructed matrix is the identity in whatever dimension it meets.
class AnisotropyMatrix {
 public:
  AnisotropyMatrix() = default;

  explicit AnisotropyMatrix(Eigen::MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols() || a_.rows() == 0) {
      throw InvalidArgument("anisotropy matrix must be square and non-empty");
    }
    if (!a_.allFinite() || !a_.isApprox(a_.transpose(), 1e-12)) {
      throw InvalidArgument("anisotropy matrix must be finite and symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a_);
    if (llt.info() != Eigen::Success) {
      throw InvalidArgument("anisotropy matrix must be positive definite");
    }
    factor_ = llt.matrixL();
  }

  static AnisotropyMatrix identity() { return {}; }

  [[nodiscard]] bool is_identity() const noexcept { return a_.size() == 0; }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return a_; }

  /// Check compatibility with coordinates of dimension d.
  void check_dim(Eigen::Index d) const {
    if (!is_identity() && a_.rows() != d) {
      throw InvalidArgument("anisotropy matrix dimension " + std::to_string(a_.rows()) +
                            " does not match coordinate dimension " + std::to_string(d));
    }
  }

  /// Map rows x_i to L^T x_i with A = L L^T, so Euclidean distances of the
  /// result are A-norm distances of the input.
  [[nodiscard]] Eigen::MatrixXd transform(const Locations& locs) const {
    check_dim(locs.cols());
    if (is_identity()) return locs;
    return locs * factor_;
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd factor_;
};

/// Range rho > 0 and variance sigma^2 >= 0 of one Gaussian process.
struct GpParams {
  double range = 1.0;
  double variance = 0.0;
};

/// sqrt((a-b)^T A (a-b)).
inline double aniso_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                             const Eigen::Ref<const Eigen::VectorXd>& b,
                             const AnisotropyMatrix& A = {}) {
  if (a.size() != b.size()) {
    throw InvalidArgument("aniso_distance: coordinate dimensions differ");
  }
  A.check_dim(a.size());
  const Eigen::VectorXd diff = a - b;
  const double q = A.is_identity() ? diff.squaredNorm() : diff.dot(A.matrix() * diff);
  return std::sqrt(std::max(q, 0.0));
}

inline double correlation(double u, const KernelSpec& spec) {
  if (!(u >= 0.0)) throw InvalidArgument("correlation: distance must be nonnegative");
  switch (spec.family) {
    case KernelFamily::Exponential:
      return std::exp(-u);
    case KernelFamily::Matern32: {
      const double a = std::sqrt(3.0) * u;
      return (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::Matern52: {
      const double a = std::sqrt(5.0) * u;
      return (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
  }
  return 0.0;
}

/// r'(u). Bounded on [0, inf) for every supported family.
inline double correlation_derivative(double u, const KernelSpec& spec) {
  if (!(u >= 0.0)) throw InvalidArgument("correlation_derivative: distance must be nonnegative");
  switch (spec.family) {
    case KernelFamily::Exponential:
      return -std::exp(-u);
    case KernelFamily::Matern32:
      return -3.0 * u * std::exp(-std::sqrt(3.0) * u);
    case KernelFamily::Matern52: {
      const double a = std::sqrt(5.0) * u;
      return -(5.0 / 3.0) * u * (1.0 + a) * std::exp(-a);
    }
  }
  return 0.0;
}

/// Elementwise correlation of a nonnegative scaled-distance array.
inline Eigen::ArrayXXd correlation_array(const Eigen::ArrayXXd& u, const KernelSpec& spec) {
  switch (spec.family) {
    case KernelFamily::Exponential:
      return (-u).exp();
    case KernelFamily::Matern32: {
      const Eigen::ArrayXXd a = std::sqrt(3.0) * u;
      return (1.0 + a) * (-a).exp();
    }
    case KernelFamily::Matern52: {
      const Eigen::ArrayXXd a = std::sqrt(5.0) * u;
      return (1.0 + a + a.square() / 3.0) * (-a).exp();
    }
  }
  return Eigen::ArrayXXd::Zero(u.rows(), u.cols());
}

/// d/d rho of r(D / rho) evaluated elementwise, i.e. r'(u) * (-u / rho) with
/// u = D / rho. `corr` must be correlation_array(u).
inline Eigen::ArrayXXd range_derivative_array(const Eigen::ArrayXXd& u, const Eigen::ArrayXXd& corr,
                                              double range, const KernelSpec& spec) {
  switch (spec.family) {
    case KernelFamily::Exponential:
      return corr * u / range;
    case KernelFamily::Matern32: {
      const Eigen::ArrayXXd a = std::sqrt(3.0) * u;
      return 3.0 * u.square() * (-a).exp() / range;
    }
    case KernelFamily::Matern52: {
      const Eigen::ArrayXXd a = std::sqrt(5.0) * u;
      return (5.0 / 3.0) * u.square() * (1.0 + a) * (-a).exp() / range;
    }
  }
  return Eigen::ArrayXXd::Zero(u.rows(), u.cols());
}

/// Pairwise A-norm distances between the rows of `a` and the rows of `b`.
inline Eigen::MatrixXd cross_distance_matrix(const Locations& a, const Locations& b,
                                             const AnisotropyMatrix& A = {}) {
  if (a.cols() != b.cols()) {
    throw InvalidArgument("cross_distance_matrix: coordinate dimensions differ");
  }
  const Eigen::MatrixXd za = A.transform(a);
  const Eigen::MatrixXd zb = A.transform(b);
  Eigen::MatrixXd d(za.rows(), zb.rows());
  for (Eigen::Index j = 0; j < zb.rows(); ++j) {
    for (Eigen::Index i = 0; i < za.rows(); ++i) {
      d(i, j) = (za.row(i) - zb.row(j)).norm();
    }
  }
  return d;
}

/// Symmetric distance matrix with an exact zero diagonal.
inline Eigen::MatrixXd distance_matrix(const Locations& locs, const AnisotropyMatrix& A = {}) {
  const Eigen::MatrixXd z = A.transform(locs);
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = (z.row(i) - z.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

namespace detail {

inline void check_gp(const GpParams& p) {
  if (!(p.range > 0.0) || !std::isfinite(p.range)) {
    throw InvalidArgument("GP range must be positive and finite");
  }
  if (!(p.variance >= 0.0) || !std::isfinite(p.variance)) {
    throw InvalidArgument("GP variance must be nonnegative and finite");
  }
}

}  // namespace detail

/// sigma^2 r(D / rho) for a precomputed distance matrix.
inline Eigen::MatrixXd covariance_from_distances(const Eigen::MatrixXd& dist, const GpParams& params,
                                                 const KernelSpec& spec) {
  detail::check_gp(params);
  if (params.variance == 0.0) return Eigen::MatrixXd::Zero(dist.rows(), dist.cols());
  return params.variance * correlation_array(dist.array() / params.range, spec).matrix();
}

inline Eigen::MatrixXd covariance_matrix(const Locations& locs, const GpParams& params,
                                         const KernelSpec& spec, const AnisotropyMatrix& A = {}) {
  if (locs.rows() < 1) throw InvalidArgument("covariance_matrix: need at least one location");
  return covariance_from_distances(distance_matrix(locs, A), params, spec);
}

inline Eigen::MatrixXd covariance_range_derivative_from_distances(const Eigen::MatrixXd& dist,
                                                                  const GpParams& params,
                                                                  const KernelSpec& spec) {
  detail::check_gp(params);
  if (params.variance == 0.0) return Eigen::MatrixXd::Zero(dist.rows(), dist.cols());
  const Eigen::ArrayXXd u = dist.array() / params.range;
  const Eigen::ArrayXXd corr = correlation_array(u, spec);
  return params.variance * range_derivative_array(u, corr, params.range, spec).matrix();
}

/// d Sigma / d rho = sigma^2 r'(U / rho) (-U / rho^2), elementwise.
inline Eigen::MatrixXd covariance_matrix_range_derivative(const Locations& locs,
                                                          const GpParams& params,
                                                          const KernelSpec& spec,
                                                          const AnisotropyMatrix& A = {}) {
  return covariance_range_derivative_from_distances(distance_matrix(locs, A), params, spec);
}

}  // namespace svcsel
