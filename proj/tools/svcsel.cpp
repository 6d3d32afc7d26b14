// svcsel: fit, select, simulate, cv and predict for GP-based SVC models.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svcsel/svcsel.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace svcsel;

enum Exit { kOk = 0, kInput = 2, kNumerical = 3, kNoConvergence = 4 };

struct Common {
  std::string data;
  std::string response;
  std::vector<std::string> fixed;
  std::vector<std::string> svc;
  std::vector<std::string> coords;
  std::vector<std::string> standardize;
  std::string kernel = "exp";
  std::uint64_t seed = 1;
  std::string out;
  unsigned threads = 0;
  double range_lower = std::nan("");
  int t_max = 20;
  double delta = 1e-6;
  bool numeric_gradient = false;
};

struct Tuning {
  int n_init = 10;
  int n_iter = 10;
  std::vector<double> lambda_bounds{1e-6, 1.0};
};

struct Loaded {
  Dataset data;
  std::vector<Standardization> scaling;
};

Loaded load_dataset(const Common& c, const std::string& path) {
  Table t = read_csv(path);
  Loaded out;
  out.scaling = standardize(t, c.standardize);
  if (c.coords.empty() || c.coords.size() > 3) throw InvalidArgument("--coords needs 1 to 3 columns");
  Dataset& d = out.data;
  d.y = t.column(c.response);
  d.X = t.columns(c.fixed);
  d.W = t.columns(c.svc);
  d.locations = t.columns(c.coords);
  d.fixed_names = c.fixed;
  d.svc_names = c.svc;
  d.validate();
  return out;
}

CovarianceBounds bounds_for(const Common& c, const Dataset& d) {
  CovarianceBounds b = CovarianceBounds::for_locations(d.locations);
  if (!std::isnan(c.range_lower)) b.range_lower = c.range_lower;
  return b;
}

CdConfig cd_for(const Common& c) { return {c.delta, c.t_max}; }

FitOptions fit_options(const Common& c) {
  FitOptions o;
  o.numeric_gradient = c.numeric_gradient;
  return o;
}

TuneConfig tune_for(const Common& c, const Tuning& t) {
  TuneConfig cfg;
  cfg.lower = {t.lambda_bounds.at(0), t.lambda_bounds.at(0)};
  cfg.upper = {t.lambda_bounds.at(1), t.lambda_bounds.at(1)};
  cfg.n_init = t.n_init;
  cfg.n_iter = t.n_iter;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  return cfg;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json fit_json(const FitResult& fit, const Dataset& d) {
  json j;
  json fixed = json::array();
  for (Eigen::Index i = 0; i < fit.params.p(); ++i) {
    fixed.push_back({{"name", d.fixed_names.at(static_cast<std::size_t>(i))}, {"estimate", fit.params.mu(i)}});
  }
  json svc = json::array();
  for (Eigen::Index k = 0; k < fit.params.q(); ++k) {
    const auto& g = fit.params.gp[static_cast<std::size_t>(k)];
    svc.push_back({{"name", d.svc_names.at(static_cast<std::size_t>(k))}, {"range", g.range}, {"variance", g.variance}});
  }
  const SupportSize s = count_nonzero(fit.params);
  j["fixed"] = fixed;
  j["svc"] = svc;
  j["nugget"] = fit.params.nugget;
  j["loglik"] = fit.loglik;
  j["pen_loglik"] = fit.pen_loglik;
  j["bic"] = fit.bic;
  j["n_fixed"] = s.mu;
  j["n_random"] = s.var;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations();
  json trace = json::array();
  for (const auto& st : fit.trace) {
    trace.push_back({{"t", st.t}, {"pen_loglik", st.pen_loglik}, {"mu", to_vec(st.mu)}, {"theta", to_vec(st.theta)}});
  }
  j["trace"] = trace;
  return j;
}

json header_json(const std::string& command, const Common& c, const Loaded& l, const CovarianceBounds& b) {
  json j;
  j["command"] = command;
  j["kernel"] = c.kernel;
  j["n"] = l.data.n();
  j["seed"] = c.seed;
  j["response"] = c.response;
  j["coords"] = c.coords;
  json sc = json::array();
  for (const auto& s : l.scaling) sc.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}});
  j["standardization"] = sc;
  j["bounds"] = {{"range_lower", b.range_lower}, {"nugget_lower", b.nugget_lower}};
  return j;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

int finish_fit(const json& j, const std::string& out, bool converged) {
  write_json(out, j);
  if (!converged) {
    std::cerr << "svcsel: coordinate descent reached the iteration limit\n";
    return kNoConvergence;
  }
  return kOk;
}

int cmd_fit(const Common& c) {
  const Loaded l = load_dataset(c, c.data);
  const KernelSpec spec{parse_kernel_family(c.kernel)};
  const CovarianceBounds b = bounds_for(c, l.data);
  const SvcLikelihood lik(l.data, spec, {});
  json j = header_json("fit", c, l, b);
  try {
    const FitResult fit = fit_mle(lik, b, std::nullopt, cd_for(c), fit_options(c));
    j["fit"] = fit_json(fit, l.data);
    return finish_fit(j, c.out, fit.converged);
  } catch (const FitError& e) {
    j["error"] = e.what();
    j["partial_trace_length"] = e.partial_trace().size();
    write_json(c.out, j);
    throw;
  }
}

int cmd_select(const Common& c, const Tuning& t) {
  const Loaded l = load_dataset(c, c.data);
  const KernelSpec spec{parse_kernel_family(c.kernel)};
  const CovarianceBounds b = bounds_for(c, l.data);
  const SvcLikelihood lik(l.data, spec, {});
  const CdConfig cd = cd_for(c);
  const FitOptions fo = fit_options(c);
  json j = header_json("select", c, l, b);
  const FitResult mle = fit_mle(lik, b, std::nullopt, cd, fo);
  j["mle"] = fit_json(mle, l.data);
  const TuneResult tuned = tune_shrinkage(lik, b, mle, cd, tune_for(c, t), fo);
  json trace = json::array();
  for (const auto& ev : tuned.trace) {
    json e = {{"index", ev.index},
              {"lambda_mu", ev.lambda.mu},
              {"lambda_theta", ev.lambda.theta},
              {"infill", ev.infill},
              {"ok", ev.ok},
              {"bic", ev.ok ? json(ev.bic) : json(nullptr)},
              {"loglik", ev.ok ? json(ev.loglik) : json(nullptr)},
              {"n_fixed", ev.support.mu},
              {"n_random", ev.support.var},
              {"cd_iterations", ev.cd_iterations},
              {"expected_improvement", ev.expected_improvement}};
    if (!ev.error.empty()) e["error"] = ev.error;
    trace.push_back(e);
  }
  j["mbo_trace"] = trace;
  if (!tuned.best_fit) {
    write_json(c.out, j);
    throw NumericalFailure("every shrinkage evaluation failed");
  }
  j["lambda"] = {{"mu", tuned.best.mu}, {"theta", tuned.best.theta}};
  j["pmle"] = fit_json(*tuned.best_fit, l.data);
  j["bic"] = {{"mle", mle.bic}, {"pmle", tuned.best_fit->bic}};
  return finish_fit(j, c.out, mle.converged && tuned.best_fit->converged);
}

struct SimOptions {
  int reps = 100;
  int grid = 15;
  std::vector<std::string> methods{"MLE", "PMLE", "Oracle"};
  bool fixed_covariates = false;
  double margin = 0.05;
};

int cmd_simulate(const Common& c, const Tuning& t, const SimOptions& so) {
  SimConfig cfg;
  cfg.m = so.grid;
  cfg.n_reps = so.reps;
  cfg.seed = c.seed;
  cfg.margin_fraction = so.margin;
  cfg.resample_covariates = !so.fixed_covariates;
  cfg.spec = KernelSpec{parse_kernel_family(c.kernel)};
  cfg.cd = cd_for(c);
  cfg.fit = fit_options(c);
  cfg.tune = tune_for(c, t);
  std::vector<StudyMethod> methods;
  for (const auto& m : so.methods) methods.push_back(parse_study_method(m));
  cfg.validate();
  const StudyResult res = run_study(cfg, methods, c.threads);
  const std::string prefix = c.out.empty() ? "simulate" : c.out;

  Table table;
  table.names = {"rep", "method", "ok", "rme", "C_fixed", "IC_fixed", "C_random", "IC_random",
                 "lambda_mu", "lambda_theta", "T", "converged", "loglik", "bic"};
  const int p = cfg.p();
  const int q = cfg.q();
  for (int j = 1; j <= p; ++j) table.names.push_back("mu_" + std::to_string(j));
  for (int k = 1; k <= q; ++k) table.names.push_back("range_" + std::to_string(k));
  for (int k = 1; k <= q; ++k) table.names.push_back("variance_" + std::to_string(k));
  table.names.push_back("nugget");
  table.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(res.rows.size()),
                                           static_cast<Eigen::Index>(table.names.size()), std::nan(""));
  json failures = json::array();
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const StudyRow& r = res.rows[i];
    auto row = table.values.row(static_cast<Eigen::Index>(i));
    row(0) = r.rep + 1;
    row(1) = static_cast<double>(r.method);
    row(2) = r.ok;
    if (!r.ok) {
      failures.push_back({{"rep", r.rep + 1}, {"method", to_string(r.method)}, {"error", r.error}});
      continue;
    }
    row(3) = r.rme;
    row(4) = r.counts.C_fixed;
    row(5) = r.counts.IC_fixed;
    row(6) = r.counts.C_random;
    row(7) = r.counts.IC_random;
    row(8) = r.lambda_mu;
    row(9) = r.lambda_theta;
    row(10) = r.cd_iterations;
    row(11) = r.converged;
    row(12) = r.loglik;
    row(13) = r.bic;
    Eigen::Index c0 = 14;
    for (int j = 0; j < p; ++j) row(c0++) = r.estimate.mu(j);
    for (int k = 0; k < q; ++k) row(c0++) = r.estimate.gp[static_cast<std::size_t>(k)].range;
    for (int k = 0; k < q; ++k) row(c0++) = r.estimate.gp[static_cast<std::size_t>(k)].variance;
    row(c0) = r.estimate.nugget;
  }
  // method is written by name; the numeric table only carries codes
  {
    std::ofstream out(prefix + "_reps.csv");
    if (!out) throw InvalidArgument("cannot write '" + prefix + "_reps.csv'");
    for (std::size_t cidx = 0; cidx < table.names.size(); ++cidx) out << (cidx ? "," : "") << table.names[cidx];
    out << '\n';
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      for (Eigen::Index cidx = 0; cidx < table.values.cols(); ++cidx) {
        if (cidx) out << ',';
        if (cidx == 1) {
          out << to_string(res.rows[i].method);
        } else {
          out << format_double(table.values(static_cast<Eigen::Index>(i), cidx));
        }
      }
      out << '\n';
    }
  }

  json summary;
  summary["command"] = "simulate";
  summary["reps"] = cfg.n_reps;
  summary["grid"] = cfg.m;
  summary["n"] = cfg.m * cfg.m;
  summary["seed"] = cfg.seed;
  summary["kernel"] = c.kernel;
  summary["resample_covariates"] = cfg.resample_covariates;
  json methods_json = json::array();
  int total_ok = 0;
  for (const auto& s : res.summaries) {
    total_ok += s.n_ok;
    methods_json.push_back({{"method", to_string(s.method)},
                            {"n_ok", s.n_ok},
                            {"n_failed", s.n_failed},
                            {"mrme", s.mrme},
                            {"C_fixed", s.mean_C_fixed},
                            {"IC_fixed", s.mean_IC_fixed},
                            {"C_random", s.mean_C_random},
                            {"IC_random", s.mean_IC_random},
                            {"median_T", s.median_T},
                            {"max_T", s.max_T},
                            {"n_hit_tmax", s.n_hit_tmax}});
  }
  summary["methods"] = methods_json;
  summary["failures"] = failures;
  write_json(prefix + "_summary.json", summary);
  write_json(prefix + "_timing.json", json{{"seconds", res.seconds}, {"threads", resolve_threads(c.threads)}});
  if (total_ok == 0) throw NumericalFailure("every replicate failed");
  return kOk;
}

int cmd_cv(const Common& c, const Tuning& t, int folds, const std::vector<std::string>& method_names) {
  const Loaded l = load_dataset(c, c.data);
  CvOptions opts;
  opts.spec = KernelSpec{parse_kernel_family(c.kernel)};
  opts.cd = cd_for(c);
  opts.fit = fit_options(c);
  opts.tune = tune_for(c, t);
  opts.tune.threads = 1;
  opts.seed = c.seed;
  opts.threads = c.threads;
  if (!std::isnan(c.range_lower)) {
    CovarianceBounds b;
    b.range_lower = c.range_lower;
    opts.bounds = b;
  }
  const std::string prefix = c.out.empty() ? "cv" : c.out;
  std::ofstream csv(prefix + "_folds.csv");
  if (!csv) throw InvalidArgument("cannot write '" + prefix + "_folds.csv'");
  csv << "fold,method,n_test,rmse,n_fixed,n_random\n";
  json summary;
  summary["command"] = "cv";
  summary["folds"] = folds;
  summary["seed"] = c.seed;
  summary["n"] = l.data.n();
  json rows = json::array();
  json fold_failures = json::array();
  bool any_ok = false;
  for (const auto& name : method_names) {
    const CvMethod method = parse_cv_method(name);
    const CvResult res = kfold_cv(l.data, folds, method, opts);
    if (rows.empty()) summary["fold_sizes"] = res.plan.sizes();
    for (const auto& f : res.folds) {
      csv << f.fold + 1 << ',' << to_string(method) << ',' << f.n_test << ',' << format_double(f.rmse) << ','
          << f.n_fixed << ',' << f.n_random << '\n';
      if (!f.ok) fold_failures.push_back({{"fold", f.fold + 1}, {"method", to_string(method)}, {"error", f.error}});
      any_ok = any_ok || f.ok;
    }
    rows.push_back({{"method", to_string(method)},
                    {"mean_rmse", res.mean_rmse},
                    {"sd_rmse", res.sd_rmse},
                    {"n_failed", res.n_failed}});
  }
  summary["methods"] = rows;
  summary["failures"] = fold_failures;
  write_json(prefix + "_summary.json", summary);
  if (!any_ok) throw NumericalFailure("every fold failed");
  return kOk;
}

SvcParams params_from_json(const json& fit, const Dataset& d) {
  SvcParams p;
  const auto& fixed = fit.at("fixed");
  const auto& svc = fit.at("svc");
  if (static_cast<Eigen::Index>(fixed.size()) != d.p() || static_cast<Eigen::Index>(svc.size()) != d.q()) {
    throw InvalidArgument("fit file does not match the requested columns");
  }
  p.mu.resize(d.p());
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    const auto& e = fixed.at(static_cast<std::size_t>(j));
    if (e.at("name").get<std::string>() != d.fixed_names[static_cast<std::size_t>(j)]) {
      throw InvalidArgument("fit file column order differs at fixed effect '" + d.fixed_names[static_cast<std::size_t>(j)] + "'");
    }
    p.mu(j) = e.at("estimate").get<double>();
  }
  for (Eigen::Index k = 0; k < d.q(); ++k) {
    const auto& e = svc.at(static_cast<std::size_t>(k));
    if (e.at("name").get<std::string>() != d.svc_names[static_cast<std::size_t>(k)]) {
      throw InvalidArgument("fit file column order differs at SVC '" + d.svc_names[static_cast<std::size_t>(k)] + "'");
    }
    p.gp.push_back({e.at("range").get<double>(), e.at("variance").get<double>()});
  }
  p.nugget = fit.at("nugget").get<double>();
  return p;
}

int cmd_predict(const Common& c, const std::string& fit_path, const std::string& new_path) {
  std::ifstream in(fit_path);
  if (!in) throw InvalidArgument("cannot open '" + fit_path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("fit file: ") + e.what());
  }
  const Loaded train = load_dataset(c, c.data);
  Table fresh = read_csv(new_path);
  // apply the training scaling to the new rows
  for (const auto& s : train.scaling) {
    if (s.name == c.response) continue;
    const Eigen::Index col = fresh.column_index(s.name);
    fresh.values.col(col) = (fresh.values.col(col).array() - s.mean) / s.sd;
  }
  const json& fit = doc.contains("pmle") ? doc.at("pmle") : doc.at("fit");
  const std::string kernel = doc.value("kernel", c.kernel);
  const SvcLikelihood lik(train.data, KernelSpec{parse_kernel_family(kernel)}, {});
  const SvcParams params = params_from_json(fit, train.data);
  const Eigen::VectorXd pred = predict(params, lik, fresh.columns(c.coords), fresh.columns(c.fixed), fresh.columns(c.svc));
  std::ofstream fout;
  std::ostream* out = &std::cout;
  if (!c.out.empty() && c.out != "-") {
    fout.open(c.out);
    if (!fout) throw InvalidArgument("cannot write '" + c.out + "'");
    out = &fout;
  }
  *out << "row,prediction\n";
  for (Eigen::Index i = 0; i < pred.size(); ++i) *out << i + 1 << ',' << format_double(pred(i)) << '\n';
  return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool needs_data) {
  auto* data = cmd->add_option("--data", c.data, "input CSV with a header row");
  if (needs_data) {
    data->required();
    cmd->add_option("--response", c.response, "response column")->required();
    cmd->add_option("--fixed", c.fixed, "fixed-effect columns")->delimiter(',');
    cmd->add_option("--svc", c.svc, "columns with spatially varying coefficients")->delimiter(',');
    cmd->add_option("--coords", c.coords, "coordinate columns")->delimiter(',')->required();
    cmd->add_option("--standardize", c.standardize, "columns to centre and scale")->delimiter(',');
    cmd->add_option("--range-lower", c.range_lower, "lower bound on the ranges");
  }
  cmd->add_option("--kernel", c.kernel, "exp, matern32 or matern52")
      ->check(CLI::IsMember({"exp", "exponential", "matern32", "matern52"}));
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output path (prefix for simulate and cv)");
  cmd->add_option("--threads", c.threads, "worker threads, 0 = all cores");
  cmd->add_option("--t-max", c.t_max, "coordinate descent iteration limit")->check(CLI::PositiveNumber);
  cmd->add_option("--delta", c.delta, "coordinate descent relative tolerance")->check(CLI::PositiveNumber);
  cmd->add_flag("--numeric-gradient", c.numeric_gradient, "finite-difference covariance gradient");
}

void add_tuning(CLI::App* cmd, Tuning& t) {
  cmd->add_option("--n-init", t.n_init, "initial design size")->check(CLI::PositiveNumber);
  cmd->add_option("--n-iter", t.n_iter, "infill iterations")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda-bounds", t.lambda_bounds, "shrinkage search box LO HI")->expected(2);
}

}  // namespace

int main(int argc, char** argv) {
  retain_large_allocations();
  CLI::App app{"Variable selection for spatially varying coefficient models"};
  app.require_subcommand(1);

  Common common;
  Tuning tuning;
  SimOptions sim;
  int folds = 10;
  std::vector<std::string> cv_methods{"ALASSO", "MLE", "PMLE"};
  std::string fit_path;
  std::string new_path;

  auto* fit = app.add_subcommand("fit", "maximum likelihood fit");
  add_common(fit, common, true);
  auto* select = app.add_subcommand("select", "penalized fit with BIC-tuned shrinkage");
  add_common(select, common, true);
  add_tuning(select, tuning);
  auto* simulate = app.add_subcommand("simulate", "simulation study");
  add_common(simulate, common, false);
  add_tuning(simulate, tuning);
  simulate->add_option("--reps", sim.reps, "replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--grid", sim.grid, "grid side m (n = m^2)")->check(CLI::Range(2, 1000));
  simulate->add_option("--methods", sim.methods, "MLE, PMLE, Oracle")->delimiter(',');
  simulate->add_option("--margin", sim.margin, "cell margin fraction");
  simulate->add_flag("--fixed-covariates", sim.fixed_covariates, "reuse the first replicate's covariates");
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  add_common(cv, common, true);
  add_tuning(cv, tuning);
  cv->add_option("--folds", folds, "number of folds")->check(CLI::Range(2, 1000000));
  cv->add_option("--methods", cv_methods, "ALASSO, MLE, PMLE")->delimiter(',');
  auto* pred = app.add_subcommand("predict", "predict at new locations from a fit file");
  add_common(pred, common, true);
  pred->add_option("--fit", fit_path, "JSON written by fit or select")->required();
  pred->add_option("--new", new_path, "CSV with coordinates and covariates of the new rows")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (!tuning.lambda_bounds.empty() && tuning.lambda_bounds.size() != 2) {
      throw InvalidArgument("--lambda-bounds needs two values");
    }
    if (*fit) return cmd_fit(common);
    if (*select) return cmd_select(common, tuning);
    if (*simulate) return cmd_simulate(common, tuning, sim);
    if (*cv) return cmd_cv(common, tuning, folds, cv_methods);
    if (*pred) return cmd_predict(common, fit_path, new_path);
  } catch (const InvalidArgument& e) {
    std::cerr << "svcsel: " << e.what() << '\n';
    return kInput;
  } catch (const NumericalFailure& e) {
    std::cerr << "svcsel: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConvergenceError& e) {
    std::cerr << "svcsel: " << e.what() << '\n';
    return kNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "svcsel: " << e.what() << '\n';
    return kInput;
  }
  return kOk;
}
