// Simulate one small data set, fit it by ML and by penalized ML, and compare
// the selected supports.

#include <cstdio>

#include "svcsel/svcsel.hpp"

int main() {
  using namespace svcsel;
  retain_large_allocations();

  SimConfig cfg;
  cfg.m = 10;
  cfg.n_reps = 1;
  cfg.seed = 7;
  const SimData sim = generate_dataset(cfg, 0);

  const SvcLikelihood lik(sim.data, cfg.spec, {});
  CovarianceBounds bounds;
  bounds.range_lower = 1.0 / (3.0 * cfg.m);

  const FitResult mle = fit_mle(lik, bounds);
  TuneConfig tune;
  tune.n_init = 6;
  tune.n_iter = 4;
  const TuneResult tuned = tune_shrinkage(lik, bounds, mle, {}, tune);
  if (!tuned.best_fit) {
    std::puts("tuning failed");
    return 1;
  }
  const FitResult& pmle = *tuned.best_fit;

  std::printf("n = %ld, lambda = (%.3g, %.3g)\n", static_cast<long>(sim.data.n()), tuned.best.mu, tuned.best.theta);
  std::printf("%-4s %8s %8s %8s | %8s %8s %8s\n", "", "true mu", "MLE", "PMLE", "true s2", "MLE", "PMLE");
  for (Eigen::Index j = 0; j < sim.data.p(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    std::printf("x%-3ld %8.3f %8.3f %8.3f | %8.3f %8.3f %8.3f\n", static_cast<long>(j + 1), cfg.true_mu(j),
                mle.params.mu(j), pmle.params.mu(j), cfg.true_gp[k].variance, mle.params.gp[k].variance,
                pmle.params.gp[k].variance);
  }
  std::printf("BIC: MLE %.1f, PMLE %.1f\n", mle.bic, pmle.bic);
  return 0;
}
