#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
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
#include "svcsel/mbo.hpp"
#include "svcsel/model.hpp"
#include "svcsel/parallel.hpp"
#include "svcsel/pmle.hpp"
#include "svcsel/predict_cv.hpp"

namespace svcsel {

struct SimConfig {
  int m = 15;
  double gamma = 0.5;
  Eigen::VectorXd true_mu = (Eigen::VectorXd(8) << 3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 1.0, 0.0).finished();
  // ranges of the zero-variance fields are placeholders and never used
  std::vector<GpParams> true_gp = {{0.2, 0.2}, {0.1, 0.0},  {0.1, 0.25}, {0.1, 0.0},
                                   {0.075, 0.25}, {0.1, 0.2}, {0.1, 0.0},  {0.1, 0.0}};
  double nugget = 0.1;
  int n_reps = 100;
  std::uint64_t seed = 1;
  double margin_fraction = 0.05;
  /// Draw new covariates for every replicate; otherwise replicate 0's are reused.
  bool resample_covariates = true;
  KernelSpec spec{KernelFamily::Exponential};
  CdConfig cd;
  TuneConfig tune;
  FitOptions fit;

  [[nodiscard]] int p() const noexcept { return static_cast<int>(true_mu.size()); }
  [[nodiscard]] int q() const noexcept { return static_cast<int>(true_gp.size()); }

  void validate() const {
    if (m < 2) throw InvalidArgument("grid side must be at least 2");
    if (!(std::abs(gamma) < 1.0)) throw InvalidArgument("|gamma| must be below 1");
    if (p() != q()) throw InvalidArgument("every covariate carries a fixed and a random effect: p must equal q");
    if (!(nugget > 0.0)) throw InvalidArgument("nugget must be positive");
    if (n_reps < 1) throw InvalidArgument("need at least one replicate");
    if (!(margin_fraction >= 0.0 && margin_fraction < 0.5)) throw InvalidArgument("margin fraction in [0, 0.5)");
    for (const auto& g : true_gp) detail::check_gp(g);
    cd.validate();
    tune.validate();
  }

  [[nodiscard]] SvcParams truth() const {
    SvcParams t;
    t.mu = true_mu;
    t.gp = true_gp;
    t.nugget = nugget;
    return t;
  }
};

/// One point per cell of an m x m tiling of the unit square, uniform on the
/// centred sub-square of side (1 - 2 margin) / m. Row order is cell-major.
template <typename Rng>
Locations perturbed_grid(int m, double margin_fraction, Rng& rng) {
  if (m < 2) throw InvalidArgument("perturbed_grid: m must be at least 2");
  if (!(margin_fraction >= 0.0 && margin_fraction < 0.5)) throw InvalidArgument("perturbed_grid: margin in [0, 0.5)");
  const double cell = 1.0 / m;
  const double lo = margin_fraction * cell;
  const double width = (1.0 - 2.0 * margin_fraction) * cell;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Locations out(static_cast<Eigen::Index>(m) * m, 2);
  Eigen::Index r = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j, ++r) {
      out(r, 0) = i * cell + lo + width * unif(rng);
      out(r, 1) = j * cell + lo + width * unif(rng);
    }
  }
  return out;
}

/// Rows i.i.d. N(0, G) with G_jk = gamma^|j-k|, via the Cholesky factor of G.
template <typename Rng>
Eigen::MatrixXd sample_covariates(Eigen::Index n, Eigen::Index p, double gamma, Rng& rng) {
  if (!(std::abs(gamma) < 1.0)) throw InvalidArgument("sample_covariates: |gamma| must be below 1");
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < p; ++k) g(j, k) = std::pow(gamma, static_cast<double>(std::abs(j - k)));
  }
  const Eigen::MatrixXd lower = cholesky(g).matrixL();
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = norm(rng);
  }
  return z * lower.transpose();
}

/// A zero-mean GP draw L z at the given locations. Zero variance gives an
/// exact zero vector; a failing factorization is retried with growing jitter.
template <typename Rng>
Eigen::VectorXd sample_gp(const Locations& locs, const GpParams& gp, const KernelSpec& spec,
                          const AnisotropyMatrix& A, Rng& rng) {
  detail::check_gp(gp);
  const Eigen::Index n = locs.rows();
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = norm(rng);
  if (gp.variance == 0.0) return Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd cov = covariance_matrix(locs, gp, spec, A);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    try {
      const auto llt = cholesky(cov, jitter);
      return llt.matrixL() * z;
    } catch (const NumericalFailure&) {
      jitter = jitter == 0.0 ? 1e-10 * gp.variance : jitter * 10.0;
    }
  }
  throw NumericalFailure("sample_gp: covariance not positive definite even with jitter");
}

/// Everything needed to rebuild y from its parts.
struct SimTruth {
  SvcParams params;
  Eigen::MatrixXd eta;  // n x q field values
  Eigen::VectorXd eps;
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

namespace detail {

enum class SimStream : std::uint32_t { Locations = 1, Covariates = 2, Fields = 3, Noise = 4, Tuning = 5 };

inline std::mt19937_64 stream_rng(std::uint64_t seed, int rep, SimStream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffULL), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

/// y_i = sum_j mu_j x_ij + sum_k eta_ik x_ik + eps_i, accumulated in this order.
inline Eigen::VectorXd assemble_response(const Eigen::MatrixXd& X, const Eigen::VectorXd& mu,
                                         const Eigen::MatrixXd& eta, const Eigen::VectorXd& eps) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) v += mu(j) * X(i, j);
    for (Eigen::Index k = 0; k < eta.cols(); ++k) v += eta(i, k) * X(i, k);
    y(i) = v + eps(i);
  }
  return y;
}

}  // namespace detail

inline Eigen::VectorXd rebuild_response(const SimData& sim) {
  return detail::assemble_response(sim.data.X, sim.truth.params.mu, sim.truth.eta, sim.truth.eps);
}

/// Replicate `rep` of the study; deterministic in (cfg.seed, rep).
inline SimData generate_dataset(const SimConfig& cfg, int rep) {
  cfg.validate();
  const Eigen::Index p = cfg.p();
  const Eigen::Index q = cfg.q();
  auto loc_rng = detail::stream_rng(cfg.seed, rep, detail::SimStream::Locations);
  auto cov_rng = detail::stream_rng(cfg.seed, cfg.resample_covariates ? rep : 0, detail::SimStream::Covariates);
  auto gp_rng = detail::stream_rng(cfg.seed, rep, detail::SimStream::Fields);
  auto eps_rng = detail::stream_rng(cfg.seed, rep, detail::SimStream::Noise);

  SimData out;
  Dataset& d = out.data;
  d.locations = perturbed_grid(cfg.m, cfg.margin_fraction, loc_rng);
  const Eigen::Index n = d.locations.rows();
  d.X = sample_covariates(n, p, cfg.gamma, cov_rng);
  d.W = d.X;
  for (Eigen::Index j = 0; j < p; ++j) {
    d.fixed_names.push_back("x" + std::to_string(j + 1));
    d.svc_names.push_back("x" + std::to_string(j + 1));
  }

  out.truth.params = cfg.truth();
  out.truth.eta.resize(n, q);
  for (Eigen::Index k = 0; k < q; ++k) {
    out.truth.eta.col(k) = sample_gp(d.locations, cfg.true_gp[static_cast<std::size_t>(k)], cfg.spec, {}, gp_rng);
  }
  std::normal_distribution<double> norm(0.0, std::sqrt(cfg.nugget));
  out.truth.eps.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.truth.eps(i) = norm(eps_rng);
  d.y = detail::assemble_response(d.X, cfg.true_mu, out.truth.eta, out.truth.eps);
  return out;
}

/// Relative model error ||y - y_hat||_1 / ||y - mean(y)||_1.
inline double rme(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  if (y.size() != y_hat.size() || y.size() == 0) throw InvalidArgument("rme: length mismatch");
  const double denom = (y.array() - y.mean()).abs().sum();
  if (!(denom > 0.0)) throw InvalidArgument("rme: constant response");
  return (y - y_hat).lpNorm<1>() / denom;
}

struct SelectionCounts {
  int C_fixed = 0;
  int IC_fixed = 0;
  int C_random = 0;
  int IC_random = 0;
};

/// C counts coordinates estimated exactly zero that are truly zero, IC those
/// estimated zero that are not.
inline SelectionCounts selection_counts(const SvcParams& estimate, const SvcParams& truth) {
  if (estimate.p() != truth.p() || estimate.q() != truth.q()) throw InvalidArgument("selection_counts: dimensions");
  SelectionCounts c;
  for (Eigen::Index j = 0; j < truth.p(); ++j) {
    if (estimate.mu(j) != 0.0) continue;
    if (truth.mu(j) == 0.0) {
      ++c.C_fixed;
    } else {
      ++c.IC_fixed;
    }
  }
  for (Eigen::Index k = 0; k < truth.q(); ++k) {
    if (estimate.gp[k].variance != 0.0) continue;
    if (truth.gp[k].variance == 0.0) {
      ++c.C_random;
    } else {
      ++c.IC_random;
    }
  }
  return c;
}

enum class StudyMethod { MLE, PMLE, Oracle };

inline const char* to_string(StudyMethod m) {
  switch (m) {
    case StudyMethod::MLE: return "MLE";
    case StudyMethod::PMLE: return "PMLE";
    case StudyMethod::Oracle: return "Oracle";
  }
  return "unknown";
}

inline StudyMethod parse_study_method(const std::string& s) {
  if (s == "MLE" || s == "mle") return StudyMethod::MLE;
  if (s == "PMLE" || s == "pmle") return StudyMethod::PMLE;
  if (s == "Oracle" || s == "oracle") return StudyMethod::Oracle;
  throw InvalidArgument("unknown study method '" + s + "'");
}

struct StudyRow {
  int rep = 0;
  StudyMethod method = StudyMethod::MLE;
  bool ok = false;
  std::string error;
  double rme = std::numeric_limits<double>::quiet_NaN();
  SelectionCounts counts;
  double lambda_mu = std::numeric_limits<double>::quiet_NaN();
  double lambda_theta = std::numeric_limits<double>::quiet_NaN();
  int cd_iterations = 0;
  bool converged = false;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  SvcParams estimate;
};

struct MethodSummary {
  StudyMethod method = StudyMethod::MLE;
  int n_ok = 0;
  int n_failed = 0;
  double mrme = std::numeric_limits<double>::quiet_NaN();
  double mean_C_fixed = std::numeric_limits<double>::quiet_NaN();
  double mean_IC_fixed = std::numeric_limits<double>::quiet_NaN();
  double mean_C_random = std::numeric_limits<double>::quiet_NaN();
  double mean_IC_random = std::numeric_limits<double>::quiet_NaN();
  double median_T = std::numeric_limits<double>::quiet_NaN();
  int max_T = 0;
  int n_hit_tmax = 0;
};

struct StudyResult {
  std::vector<StudyRow> rows;  // rep-major, methods in request order
  std::vector<MethodSummary> summaries;
  double seconds = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// ML fit restricted to the true support, expanded back with exact zeros.
inline FitResult fit_oracle(const SimData& sim, const SimConfig& cfg, const CovarianceBounds& bounds) {
  const SvcParams& truth = sim.truth.params;
  std::vector<Eigen::Index> fixed, svc;
  for (Eigen::Index j = 0; j < truth.p(); ++j) {
    if (truth.mu(j) != 0.0) fixed.push_back(j);
  }
  for (Eigen::Index k = 0; k < truth.q(); ++k) {
    if (truth.gp[k].variance != 0.0) svc.push_back(k);
  }
  const SvcLikelihood reduced(sim.data.columns(fixed, svc), cfg.spec, {});
  FitResult fit = fit_mle(reduced, bounds, std::nullopt, cfg.cd, cfg.fit);
  SvcParams full;
  full.mu = Eigen::VectorXd::Zero(truth.p());
  full.gp.assign(static_cast<std::size_t>(truth.q()), GpParams{bounds.range_lower, 0.0});
  for (std::size_t i = 0; i < fixed.size(); ++i) full.mu(fixed[i]) = fit.params.mu(static_cast<Eigen::Index>(i));
  for (std::size_t i = 0; i < svc.size(); ++i) full.gp[static_cast<std::size_t>(svc[i])] = fit.params.gp[i];
  full.nugget = fit.params.nugget;
  fit.params = full;
  return fit;
}

inline std::vector<StudyRow> run_replicate(const SimConfig& cfg, int rep, const std::vector<StudyMethod>& methods) {
  std::vector<StudyRow> rows;
  SimData sim;
  std::string gen_error;
  try {
    sim = generate_dataset(cfg, rep);
  } catch (const std::exception& e) {
    gen_error = e.what();
  }
  CovarianceBounds bounds;
  bounds.range_lower = 1.0 / (3.0 * cfg.m);
  std::optional<SvcLikelihood> lik;
  if (gen_error.empty()) lik.emplace(sim.data, cfg.spec, AnisotropyMatrix{});

  std::optional<FitResult> mle;
  std::string mle_error;
  auto get_mle = [&]() -> const FitResult& {
    if (!mle && mle_error.empty()) {
      try {
        mle = fit_mle(*lik, bounds, std::nullopt, cfg.cd, cfg.fit);
      } catch (const std::exception& e) {
        mle_error = e.what();
      }
    }
    if (!mle) throw NumericalFailure("ML fit failed: " + mle_error);
    return *mle;
  };

  for (StudyMethod method : methods) {
    StudyRow row;
    row.rep = rep;
    row.method = method;
    try {
      if (!gen_error.empty()) throw NumericalFailure("data generation failed: " + gen_error);
      FitResult fit;
      switch (method) {
        case StudyMethod::MLE: fit = get_mle(); break;
        case StudyMethod::PMLE: {
          TuneConfig tc = cfg.tune;
          tc.seed = stream_rng(cfg.seed, rep, SimStream::Tuning)();
          tc.threads = 1;
          const TuneResult tuned = tune_shrinkage(*lik, bounds, get_mle(), cfg.cd, tc, cfg.fit);
          if (!tuned.best_fit) throw NumericalFailure("every shrinkage evaluation failed");
          fit = *tuned.best_fit;
          row.lambda_mu = tuned.best.mu;
          row.lambda_theta = tuned.best.theta;
          break;
        }
        case StudyMethod::Oracle: fit = fit_oracle(sim, cfg, bounds); break;
      }
      row.rme = rme(sim.data.y, fitted_values(fit.params, *lik));
      row.counts = selection_counts(fit.params, sim.truth.params);
      row.cd_iterations = fit.iterations();
      row.converged = fit.converged;
      row.loglik = fit.loglik;
      row.bic = fit.bic;
      row.estimate = fit.params;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline std::vector<MethodSummary> summarize_study(const std::vector<StudyRow>& rows,
                                                  const std::vector<StudyMethod>& methods, int t_max) {
  std::vector<MethodSummary> out;
  for (StudyMethod method : methods) {
    MethodSummary s;
    s.method = method;
    std::vector<double> rmes, ts;
    double cf = 0, icf = 0, cr = 0, icr = 0;
    for (const auto& r : rows) {
      if (r.method != method) continue;
      if (!r.ok) {
        ++s.n_failed;
        continue;
      }
      ++s.n_ok;
      rmes.push_back(r.rme);
      ts.push_back(r.cd_iterations);
      cf += r.counts.C_fixed;
      icf += r.counts.IC_fixed;
      cr += r.counts.C_random;
      icr += r.counts.IC_random;
      s.max_T = std::max(s.max_T, r.cd_iterations);
      if (r.cd_iterations >= t_max) ++s.n_hit_tmax;
    }
    if (s.n_ok > 0) {
      s.mrme = detail::median(rmes);
      s.median_T = detail::median(ts);
      s.mean_C_fixed = cf / s.n_ok;
      s.mean_IC_fixed = icf / s.n_ok;
      s.mean_C_random = cr / s.n_ok;
      s.mean_IC_random = icr / s.n_ok;
    }
    out.push_back(s);
  }
  return out;
}

/// The replication study: every replicate is generated from its own RNG
/// streams and fitted by each requested method. Replicates run in parallel;
/// results do not depend on the thread count.
inline StudyResult run_study(const SimConfig& cfg, const std::vector<StudyMethod>& methods, unsigned threads = 1) {
  cfg.validate();
  if (methods.empty()) throw InvalidArgument("run_study: no methods requested");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<StudyRow>> per_rep(static_cast<std::size_t>(cfg.n_reps));
  parallel_for(per_rep.size(), threads, [&](std::size_t r) {
    per_rep[r] = detail::run_replicate(cfg, static_cast<int>(r), methods);
  });
  StudyResult res;
  for (auto& rows : per_rep) {
    for (auto& row : rows) res.rows.push_back(std::move(row));
  }
  res.summaries = summarize_study(res.rows, methods, cfg.cd.t_max);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace svcsel
