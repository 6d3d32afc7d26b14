#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "svcsel/information.hpp"
#include "svcsel/pmle.hpp"
#include "svcsel/simstudy.hpp"

using namespace svcsel;

namespace {

SimData small_sim(int rep = 0) {
  SimConfig cfg;
  cfg.m = 7;
  cfg.seed = 11;
  return generate_dataset(cfg, rep);
}

CovarianceBounds small_bounds() {
  CovarianceBounds b;
  b.range_lower = 1.0 / 21.0;
  return b;
}

}  // namespace

TEST(FitMle, NuggetOnlyModelIsOls) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset d;
  const Eigen::Index n = 40;
  d.X.resize(n, 3);
  d.y.resize(n);
  d.W.resize(n, 0);
  d.locations.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = z(rng);
    d.X(i, 2) = z(rng);
    d.locations(i, 0) = z(rng);
    d.locations(i, 1) = z(rng);
    d.y(i) = 1.0 + 2.0 * d.X(i, 1) + 0.5 * z(rng);
  }
  const FitResult fit = fit_mle(d, {}, {}, CovarianceBounds{});
  const Eigen::VectorXd ols = (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * d.y);
  EXPECT_LE((fit.params.mu - ols).cwiseAbs().maxCoeff(), 1e-8);
  const double rss = (d.y - d.X * ols).squaredNorm();
  EXPECT_NEAR(fit.params.nugget, rss / double(n), 1e-6 * rss / double(n));
  EXPECT_TRUE(fit.converged);
}

TEST(FitMle, DoesNotDecreaseFromStart) {
  const SimData sim = small_sim();
  const SvcLikelihood lik(sim.data, {});
  const Eigen::VectorXd theta0 = sim.truth.params.theta();
  const FitResult fit = fit_mle(lik, small_bounds(), theta0);
  const Eigen::VectorXd mu0 = gls(sim.data.y, sim.data.X, lik.sigma_y(theta0));
  EXPECT_GE(fit.loglik, lik.log_likelihood(mu0, theta0) - 1e-8);
  EXPECT_GE(fit.iterations(), 1);
  EXPECT_LE(fit.iterations(), 20);
}

TEST(FitMle, TraceIsMonotoneAndBicConsistent) {
  const SimData sim = small_sim(1);
  const SvcLikelihood lik(sim.data, {});
  const FitResult fit = fit_mle(lik, small_bounds());
  for (std::size_t t = 1; t < fit.trace.size(); ++t) {
    EXPECT_GE(fit.trace[t].pen_loglik, fit.trace[t - 1].pen_loglik - 1e-6 * std::abs(fit.trace[t - 1].pen_loglik));
  }
  EXPECT_NEAR(fit.bic, bic(fit), 1e-10);
  EXPECT_NEAR(fit.loglik, lik.log_likelihood(fit.params.mu, fit.params.theta()), 1e-10);
}

TEST(AdaptiveWeights, Reciprocals) {
  FitResult f;
  f.params.mu = Eigen::Vector3d(2.0, 3.0, -1.5);
  f.params.gp = {{0.1, 0.25}, {0.1, 0.0}};
  const auto w = adaptive_weights(f);
  EXPECT_DOUBLE_EQ(w.mu(0), 0.5);
  EXPECT_DOUBLE_EQ(w.mu(1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(w.mu(2), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(w.var(0), 4.0);
  EXPECT_TRUE(std::isinf(w.var(1)));
}

TEST(FitPmle, ZeroShrinkageKeepsTheMle) {
  const SimData sim = small_sim(2);
  const SvcLikelihood lik(sim.data, {});
  const FitResult mle = fit_mle(lik, small_bounds());
  const FitResult pmle = fit_pmle(lik, small_bounds(), {0.0, 0.0}, mle);
  EXPECT_LE((pmle.params.mu - mle.params.mu).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, mle.params.mu.norm()));
  EXPECT_LE((pmle.params.theta() - mle.params.theta()).lpNorm<1>(), 1e-4 * mle.params.theta().lpNorm<1>());
  EXPECT_NEAR(pmle.loglik, mle.loglik, 1e-6 * std::abs(mle.loglik));
}

TEST(FitPmle, PinnedVarianceStaysZero) {
  const SimData sim = small_sim(3);
  const SvcLikelihood lik(sim.data, {});
  FitResult mle = fit_mle(lik, small_bounds());
  mle.params.gp[0].variance = 0.0;
  mle.params.gp[4].variance = 0.0;
  const FitResult pmle = fit_pmle(lik, small_bounds(), {1e-3, 1e-3}, mle);
  EXPECT_EQ(pmle.params.gp[0].variance, 0.0);
  EXPECT_EQ(pmle.params.gp[4].variance, 0.0);
  for (const auto& step : pmle.trace) {
    EXPECT_EQ(step.theta(theta_index::variance(0)), 0.0);
    EXPECT_EQ(step.theta(theta_index::variance(4)), 0.0);
  }
}

TEST(FitPmle, HugeMeanShrinkageZeroesMu) {
  const SimData sim = small_sim(4);
  const SvcLikelihood lik(sim.data, {});
  const FitResult mle = fit_mle(lik, small_bounds());
  const FitResult pmle = fit_pmle(lik, small_bounds(), {1e6, 1e-6}, mle);
  EXPECT_TRUE(pmle.params.mu.isZero(0.0));
  EXPECT_GT(pmle.params.nugget + pmle.params.gp[0].variance, mle.params.nugget);
}

TEST(FitPmle, ShrinkageSelectsFixedEffects) {
  const SimData sim = small_sim(5);
  const SvcLikelihood lik(sim.data, {});
  const FitResult mle = fit_mle(lik, small_bounds());
  const FitResult pmle = fit_pmle(lik, small_bounds(), {0.05, 1e-6}, mle);
  const auto s = count_nonzero(pmle.params);
  EXPECT_LE(s.mu, count_nonzero(mle.params).mu);
  EXPECT_LE(pmle.params.mu.cwiseAbs().sum(), mle.params.mu.cwiseAbs().sum());
  EXPECT_THROW(fit_pmle(lik, small_bounds(), {-1.0, 0.0}, mle), InvalidArgument);
}

TEST(Bic, FormulaAndRows) {
  EXPECT_DOUBLE_EQ(bic(0.0, 0, 0, 10), 0.0);
  EXPECT_NEAR(bic(-264.0, 9, 6, 322), 614.7, 0.15);
  EXPECT_NEAR(bic(-303.9, 3, 0, 322), 625.2, 0.15);
  EXPECT_THROW(bic(0.0, 1, 1, 0), InvalidArgument);
}

TEST(CountNonzero, Examples) {
  SimConfig cfg;
  const SvcParams t = cfg.truth();
  EXPECT_EQ(count_nonzero(t).mu, 4);
  EXPECT_EQ(count_nonzero(t).var, 4);
  SvcParams z;
  z.mu = Eigen::VectorXd::Zero(3);
  z.gp = {{1.0, 0.0}};
  EXPECT_EQ(count_nonzero(z).mu, 0);
  EXPECT_EQ(count_nonzero(z).var, 0);
}

TEST(CovarianceBounds, GridLowerRange) {
  std::mt19937_64 rng(3);
  const Locations g = perturbed_grid(15, 0.0, rng);
  const auto b = CovarianceBounds::for_locations(g);
  EXPECT_NEAR(b.range_lower, 1.0 / 45.0, 0.002);
}

TEST(CdConfig, Validation) {
  CdConfig cd;
  cd.delta = 0.0;
  EXPECT_THROW(cd.validate(), InvalidArgument);
  cd = {};
  cd.t_max = 0;
  EXPECT_THROW(cd.validate(), InvalidArgument);
}
