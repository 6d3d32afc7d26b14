// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any check failed.
//
//   svcsel_acceptance core    criteria 1-6 and 10
//   svcsel_acceptance bic     criterion 9
//   svcsel_acceptance study   criteria 7 and 8 (25 replicates, several minutes)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "svcsel/svcsel.hpp"

using namespace svcsel;

namespace {

int failures = 0;

void report(int id, const char* tag, bool ok, const std::string& detail) {
  std::printf("%s criterion %d%s: %s\n", ok ? "PASS" : "FAIL", id, tag, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const KernelFamily kFamilies[] = {KernelFamily::Exponential, KernelFamily::Matern32, KernelFamily::Matern52};

void criterion_1() {
  std::mt19937_64 rng(101);
  double worst_fd = 0.0;
  bool exact = true;
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int q = 1 + rep % 3;
    auto in = oracle::random_instance(rng, 12 + rep % 10, 2, q);
    const int zero = rep % q;
    in.params.gp[zero].variance = 0.0;
    const KernelSpec spec{kFamilies[rep % 3]};
    const SvcLikelihood lik(in.data, spec);
    const PenaltyConfig pen{0.1, 0.1, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(q)};
    const Eigen::VectorXd theta = in.params.theta();
    Eigen::VectorXd grad;
    neg_pll_theta(lik, theta, in.params.mu, pen, &grad);
    const Eigen::Index idx = theta_index::range(zero);
    if (grad(idx) != 0.0) exact = false;
    const double h = 1e-5 * theta(idx);
    Eigen::VectorXd tp = theta, tm = theta;
    tp(idx) += h;
    tm(idx) -= h;
    const double fd = (neg_pll_theta(lik, tp, in.params.mu, pen, nullptr) -
                       neg_pll_theta(lik, tm, in.params.mu, pen, nullptr)) /
                      (2.0 * h);
    worst_fd = std::max(worst_fd, std::abs(fd));
    ++checked;
  }
  report(1, "", exact && worst_fd < 1e-8,
         fmt("%g models with a zero variance, analytic range gradient ", checked) +
             (exact ? "exactly 0" : "NOT exactly 0") + fmt(", max |FD| = %.3g (tol 1e-8)", worst_fd));
}

void criterion_2() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 2 + rep % 29;
    const int q = 1 + rep % 3;
    const int p = 1 + rep % 4;
    const auto in = oracle::random_instance(rng, n, p, q, 0.2);
    const KernelFamily f = kFamilies[rep % 3];
    const double ll = log_likelihood(in.data, in.params, KernelSpec{f});
    const double ref = oracle::mvn_logpdf(in.data.y, in.data.X * in.params.mu, oracle::sigma_y(in.data, in.params, f));
    worst = std::max(worst, std::abs(ll - ref) / std::max(1.0, std::abs(ref)));
  }
  report(2, "", worst <= 1e-9, fmt("200 instances, max relative deviation from brute-force MVN %.3g (tol 1e-9)", worst));
}

void criterion_3() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int q = 1 + rep % 3;
    const auto in = oracle::random_instance(rng, 10 + rep % 15, 2, q);
    const SvcLikelihood lik(in.data, KernelSpec{kFamilies[rep % 3]});
    const PenaltyConfig pen{0.05, 0.05, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(q)};
    const Eigen::VectorXd theta = in.params.theta();
    Eigen::VectorXd grad;
    neg_pll_theta(lik, theta, in.params.mu, pen, &grad);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, theta(i));
      Eigen::VectorXd tp = theta, tm = theta;
      tp(i) += h;
      tm(i) -= h;
      const double fd = (neg_pll_theta(lik, tp, in.params.mu, pen, nullptr) -
                         neg_pll_theta(lik, tm, in.params.mu, pen, nullptr)) /
                        (2.0 * h);
      worst = std::max(worst, std::abs(grad(i) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  report(3, "", worst <= 1e-5, fmt("100 points, max relative gradient error vs central FD %.3g (tol 1e-5)", worst));
}

void criterion_4() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> z(0.0, 1.0);
  auto gauss = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
  };

  double worst_gls = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto in = oracle::random_instance(rng, 25, 4, 2);
    const Eigen::MatrixXd sigma = oracle::sigma_y(in.data, in.params, KernelFamily::Exponential);
    const Eigen::MatrixXd inv = sigma.inverse();
    const Eigen::MatrixXd& X = in.data.X;
    const Eigen::VectorXd ref = (X.transpose() * inv * X).inverse() * (X.transpose() * inv * in.data.y);
    const WhitenedProblem w = whiten(in.data.y, X, sigma);
    LassoOptions lo;
    lo.tol = 1e-13;
    const Eigen::VectorXd mu = weighted_lasso(w.y_tilde, w.X_tilde, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), lo);
    worst_gls = std::max(worst_gls, (mu - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
  report(4, "a", worst_gls <= 1e-7, fmt("lambda = 0 vs GLS, max deviation %.3g (tol 1e-7)", worst_gls));

  double worst_soft = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 30, p = 6;
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss(n, p));
    const Eigen::MatrixXd X = std::sqrt(static_cast<double>(n)) * (qr.householderQ() * Eigen::MatrixXd::Identity(n, p));
    const Eigen::VectorXd y = gauss(n, 1);
    Eigen::VectorXd lam(p);
    for (Eigen::Index j = 0; j < p; ++j) lam(j) = 0.4 * std::abs(z(rng));
    const Eigen::VectorXd mu = weighted_lasso(y, X, lam, Eigen::VectorXd::Zero(p));
    const Eigen::VectorXd c = X.transpose() * y / static_cast<double>(n);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double ref = c(j) > lam(j) ? c(j) - lam(j) : (c(j) < -lam(j) ? c(j) + lam(j) : 0.0);
      worst_soft = std::max(worst_soft, std::abs(mu(j) - ref));
    }
  }
  report(4, "b", worst_soft <= 1e-10, fmt("orthonormal design vs soft-thresholding, max deviation %.3g (tol 1e-10)", worst_soft));

  double worst_kkt = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index n = 40, p = 8;
    Eigen::MatrixXd X = gauss(n, p);
    X.col(1) = 0.9 * X.col(0) + 0.1 * X.col(1);
    const Eigen::VectorXd y = X.col(0) * 2.0 - X.col(3) + gauss(n, 1);
    Eigen::VectorXd lam(p);
    for (Eigen::Index j = 0; j < p; ++j) lam(j) = 0.3 * std::abs(z(rng));
    LassoOptions lo;
    lo.tol = 1e-12;
    const Eigen::VectorXd mu = weighted_lasso(y, X, lam, Eigen::VectorXd::Zero(p), lo);
    // KKT by hand: g = X'(y - X mu)/n
    const Eigen::VectorXd g = X.transpose() * (y - X * mu) / static_cast<double>(n);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = mu(j) == 0.0 ? std::max(0.0, std::abs(g(j)) - lam(j))
                                    : std::abs(g(j) - lam(j) * (mu(j) > 0 ? 1.0 : -1.0));
      worst_kkt = std::max(worst_kkt, v);
    }
  }
  report(4, "c", worst_kkt <= 1e-7, fmt("50 random problems, max KKT violation %.3g (tol 1e-7)", worst_kkt));
}

void criterion_5() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const int draws = 1000000;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double mean = u(rng);
    const double sd = 0.05 + std::abs(u(rng));
    const double xi = u(rng);
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double imp = std::max(xi - (mean + sd * z(rng)), 0.0);
      s += imp;
      s2 += imp * imp;
    }
    const double mc = s / draws;
    const double se = std::sqrt(std::max(s2 / draws - mc * mc, 0.0) / draws);
    const double ei = expected_improvement(mean, sd, xi);
    worst = std::max(worst, std::abs(ei - mc) / std::max(se, 1e-300));
  }
  report(5, "", worst <= 3.0, fmt("50 triples, max |EI - MC| = %.3g standard errors (tol 3)", worst));
}

void criterion_6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    const int m = 3 + rep % 18;
    const int d = 1 + rep % 2;
    Eigen::MatrixXd design(m, d);
    Eigen::VectorXd values(m);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < d; ++c) design(i, c) = u(rng);
      values(i) = std::sin(4.0 * design(i, 0)) + u(rng);
    }
    const double range = 0.1 + 0.5 * u(rng);
    const double ratio = std::pow(10.0, -4.0 + 3.0 * u(rng));
    const Surrogate s = Surrogate::with_parameters(design, values, range, ratio);

    Eigen::MatrixXd k(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        k(i, j) = oracle::corr((design.row(i) - design.row(j)).norm() / range, KernelFamily::Matern32);
      }
      k(i, i) += ratio;
    }
    const Eigen::MatrixXd kinv = k.inverse();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(m);
    const double beta = one.dot(kinv * values) / one.dot(kinv * one);
    const Eigen::VectorXd e = values - beta * one;
    const double s2 = e.dot(kinv * e) / m;
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXd x(d);
      for (int c = 0; c < d; ++c) x(c) = u(rng);
      Eigen::VectorXd r(m);
      for (int i = 0; i < m; ++i) r(i) = oracle::corr((design.row(i).transpose() - x).norm() / range, KernelFamily::Matern32);
      const double mean = beta + r.dot(kinv * e);
      const double a = 1.0 - one.dot(kinv * r);
      const double var = s2 * (1.0 - r.dot(kinv * r) + a * a / one.dot(kinv * one));
      const Prediction pr = s.predict(x);
      worst = std::max(worst, std::abs(pr.mean - mean) / std::max(1.0, std::abs(mean)));
      worst = std::max(worst, std::abs(pr.variance - std::max(var, 0.0)) / std::max(1.0, std::abs(var)));
    }
  }
  report(6, "", worst <= 1e-8, fmt("40 designs of size <= 20, max kriging deviation from dense inverse %.3g (tol 1e-8)", worst));
}

void criterion_9() {
  const double v = bic(-264.3, 7, 5, 322);
  report(9, "", std::abs(v - 563.3) <= 0.1, fmt("bic(-264.3, 7, 5, 322) = %.4f, expected 563.3 +- 0.1", v));
}

void criterion_10() {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + rep % 9;
    const int q = 1 + rep % 3;
    const auto in = oracle::random_instance(rng, n, 2, q, 0.2);
    const auto extra = oracle::random_instance(rng, 1 + rep % 5, 2, q);
    const KernelFamily f = kFamilies[rep % 3];
    const SvcLikelihood lik(in.data, KernelSpec{f});
    const auto& nd = extra.data;
    const Eigen::VectorXd got = predict(in.params, lik, nd.locations, nd.X, nd.W);
    const Eigen::VectorXd ref = oracle::conditional_signal(in.data, in.params, f, nd.locations, nd.X, nd.W);
    worst = std::max(worst, (got - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
  report(10, "a", worst <= 1e-9, fmt("100 instances n <= 10, max prediction deviation from Gaussian conditioning %.3g (tol 1e-9)", worst));

  bool partition_ok = true;
  std::vector<int> sizes;
  for (int rep = 0; rep < 20; ++rep) {
    std::mt19937_64 frng(7000 + rep);
    const Eigen::Index n = rep == 0 ? 322 : 20 + rep * 13;
    const int k = rep == 0 ? 10 : 2 + rep % 9;
    const FoldPlan plan = make_fold_plan(n, k, frng);
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int f = 0; f < k; ++f) {
      const auto test = plan.test_indices(f);
      const auto train = plan.train_indices(f);
      if (static_cast<Eigen::Index>(test.size() + train.size()) != n) partition_ok = false;
      for (auto i : test) ++seen[static_cast<std::size_t>(i)];
      const auto lo = static_cast<std::size_t>(n / k);
      if (test.size() < lo || test.size() > lo + 1) partition_ok = false;
    }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) partition_ok = false;
    if (rep == 0) {
      sizes = plan.sizes();
      std::sort(sizes.begin(), sizes.end());
    }
  }
  const std::vector<int> expected{32, 32, 32, 32, 32, 32, 32, 32, 33, 33};
  report(10, "b", partition_ok && sizes == expected,
         std::string("20 fold plans partition the rows with balanced sizes; n = 322, k = 10 gives ") +
             (sizes == expected ? "8 x 32 + 2 x 33" : "unexpected sizes"));
}

void study() {
  SimConfig cfg;
  cfg.n_reps = 25;
  cfg.seed = 20240101;
  const std::vector<StudyMethod> methods{StudyMethod::MLE, StudyMethod::PMLE, StudyMethod::Oracle};
  const StudyResult res = run_study(cfg, methods, 0);
  std::printf("study: %d replicates, n = %d, %.0f s\n", cfg.n_reps, cfg.m * cfg.m, res.seconds);
  std::printf("%-7s %5s %7s %7s %7s %7s %7s %6s %5s %5s\n", "method", "ok", "MRME", "C_fix", "IC_fix", "C_rand",
              "IC_rand", "medT", "maxT", "T=20");
  for (const auto& s : res.summaries) {
    std::printf("%-7s %5d %7.4f %7.2f %7.2f %7.2f %7.2f %6.1f %5d %5d\n", to_string(s.method), s.n_ok, s.mrme,
                s.mean_C_fixed, s.mean_IC_fixed, s.mean_C_random, s.mean_IC_random, s.median_T, s.max_T,
                s.n_hit_tmax);
  }
  const MethodSummary& mle = res.summaries[0];
  const MethodSummary& pmle = res.summaries[1];
  const MethodSummary& orc = res.summaries[2];

  report(7, "i", pmle.n_ok > 0 && pmle.mean_IC_fixed == 0.0, fmt("PMLE mean IC_fixed = %.2f (expected 0)", pmle.mean_IC_fixed));
  report(7, "ii", pmle.mean_C_fixed >= 3.0 && pmle.mean_C_fixed <= 4.0,
         fmt("PMLE mean C_fixed = %.2f (expected in [3, 4])", pmle.mean_C_fixed));
  report(7, "iii", pmle.mean_C_random > mle.mean_C_random,
         fmt("mean C_random PMLE %.2f vs MLE %.2f (expected PMLE larger)", pmle.mean_C_random, mle.mean_C_random));
  const bool order = mle.mrme < orc.mrme;
  const bool close = pmle.mrme >= 0.5 * orc.mrme && pmle.mrme <= 2.0 * orc.mrme;
  const bool band = pmle.mrme >= 0.02 && pmle.mrme <= 0.06;
  report(7, "iv", order && close && band,
         fmt("MRME MLE %.4f, Oracle %.4f, PMLE %.4f (expected MLE < Oracle, PMLE within a factor 2 of Oracle, "
             "PMLE in [0.02, 0.06])",
             mle.mrme, orc.mrme, pmle.mrme));
  report(8, "", pmle.median_T >= 3.0 && pmle.median_T <= 6.0 && pmle.n_hit_tmax == 0,
         fmt("PMLE median T = %.1f (expected in [3, 6]), max T = %g, fits reaching T_max = %g", pmle.median_T,
             static_cast<double>(pmle.max_T), static_cast<double>(pmle.n_hit_tmax)));
}

}  // namespace

int main(int argc, char** argv) {
  retain_large_allocations();
  const std::string which = argc > 1 ? argv[1] : "core";
  if (which == "core" || which == "all") {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_10();
  }
  if (which == "bic" || which == "all") criterion_9();
  if (which == "study" || which == "all") study();
  if (which != "core" && which != "bic" && which != "study" && which != "all") {
    std::fprintf(stderr, "usage: %s core|bic|study|all\n", argv[0]);
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
