#pragma once

// Reference computations written out from the textbook formulas, sharing no
// code with the library beyond plain data types.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "svcsel/kernels.hpp"
#include "svcsel/model.hpp"

namespace oracle {

inline double corr(double u, svcsel::KernelFamily f) {
  switch (f) {
    case svcsel::KernelFamily::Exponential: return std::exp(-u);
    case svcsel::KernelFamily::Matern32: return (1.0 + std::sqrt(3.0) * u) * std::exp(-std::sqrt(3.0) * u);
    case svcsel::KernelFamily::Matern52:
      return (1.0 + std::sqrt(5.0) * u + 5.0 * u * u / 3.0) * std::exp(-std::sqrt(5.0) * u);
  }
  return 0.0;
}

inline double euclid(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return std::sqrt(s);
}

/// Cross covariance of the SVC part between point sets (a, Wa) and (b, Wb).
inline Eigen::MatrixXd svc_cov(const Eigen::MatrixXd& a, const Eigen::MatrixXd& wa, const Eigen::MatrixXd& b,
                               const Eigen::MatrixXd& wb, const svcsel::SvcParams& p, svcsel::KernelFamily f) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double d = euclid(a, i, b, j);
      for (std::size_t k = 0; k < p.gp.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        c(i, j) += wa(i, kk) * wb(j, kk) * p.gp[k].variance * corr(d / p.gp[k].range, f);
      }
    }
  }
  return c;
}

inline Eigen::MatrixXd sigma_y(const svcsel::Dataset& d, const svcsel::SvcParams& p, svcsel::KernelFamily f) {
  Eigen::MatrixXd s = svc_cov(d.locations, d.W, d.locations, d.W, p, f);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, i) += p.nugget;
  return s;
}

/// Multivariate normal log density through an explicit inverse and determinant.
inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const Eigen::MatrixXd inv = lu.inverse();
  const Eigen::VectorXd r = y - mean;
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * std::log(2.0 * M_PI) + std::log(std::abs(lu.determinant())) + r.dot(inv * r));
}

/// E[signal at new points | y] from the joint Gaussian with explicit blocks.
inline Eigen::VectorXd conditional_signal(const svcsel::Dataset& d, const svcsel::SvcParams& p,
                                          svcsel::KernelFamily f, const Eigen::MatrixXd& new_locs,
                                          const Eigen::MatrixXd& x_new, const Eigen::MatrixXd& w_new) {
  const Eigen::MatrixXd c_star = svc_cov(new_locs, w_new, d.locations, d.W, p, f);
  const Eigen::MatrixXd inv = sigma_y(d, p, f).inverse();
  return x_new * p.mu + c_star * inv * (d.y - d.X * p.mu);
}

struct Instance {
  svcsel::Dataset data;
  svcsel::SvcParams params;
};

/// Random small SVC instance; a variance is zero with probability `p_zero`.
template <typename Rng>
Instance random_instance(Rng& rng, int n, int p, int q, double p_zero = 0.0) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Instance in;
  auto& d = in.data;
  d.locations.resize(n, 2);
  d.X.resize(n, p);
  d.W.resize(n, q);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.locations(i, 0) = u01(rng);
    d.locations(i, 1) = u01(rng);
    for (int j = 0; j < p; ++j) d.X(i, j) = j == 0 ? 1.0 : z(rng);
    for (int k = 0; k < q; ++k) d.W(i, k) = k == 0 ? 1.0 : z(rng);
    d.y(i) = z(rng);
  }
  in.params.mu.resize(p);
  for (int j = 0; j < p; ++j) in.params.mu(j) = z(rng);
  for (int k = 0; k < q; ++k) {
    const double var = u01(rng) < p_zero ? 0.0 : 0.2 + u01(rng);
    in.params.gp.push_back({0.05 + 0.5 * u01(rng), var});
  }
  in.params.nugget = 0.05 + 0.5 * u01(rng);
  return in;
}

}  // namespace oracle
