#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mqf/core.hpp"
#include "mqf/estimator.hpp"
#include "mqf/kernel.hpp"
#include "mqf/panel_io.hpp"
#include "mqf/selection.hpp"
#include "mqf/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mqf::cli {

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON object reader that remembers which keys were consumed so unknown keys
// can be rejected.
class Config {
 public:
  Config() : data_(json::object()) {}
  Config(json data, std::string where) : data_(std::move(data)), where_(std::move(where)) {
    if (!data_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  static Config load(const std::string& path) {
    if (path.empty()) return Config(json::object(), "config");
    std::ifstream is(path);
    if (!is) throw IoError(path + ": cannot open for reading");
    json j;
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    return Config(std::move(j), path);
  }

  bool has(const std::string& key) const { return data_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!data_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!data_.contains(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return convert<T>(key);
  }

  Config child(const std::string& key) {
    used_.insert(key);
    if (!data_.contains(key)) return Config(json::object(), where_ + "." + key);
    return Config(data_.at(key), where_ + "." + key);
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return data_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : data_.items())
      if (!used_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

 private:
  template <class T>
  T convert(const std::string& key) const {
    try {
      return data_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  json data_;
  std::string where_ = "config";
  std::set<std::string> used_;
};

fs::path require_out(const Args& args) {
  if (args.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(args.out);
  return fs::path(args.out);
}

const std::string& single_input(const Args& args) {
  if (args.inputs.size() != 1) throw ConfigError("exactly one --input is required");
  return args.inputs.front();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError(path.string() + ": write failed");
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::optional<PanelDims> read_dims(Config& cfg) {
  if (!cfg.has("dims")) {
    cfg.get<int>("dims", 0);
    return std::nullopt;
  }
  Config d = cfg.child("dims");
  PanelDims out{d.require<int>("T"), d.require<int>("p1"), d.require<int>("p2")};
  d.finish();
  return out;
}

FitConfig read_fit(Config& cfg, const Args& args) {
  FitConfig f;
  f.k1 = cfg.get<int>("k1", f.k1);
  f.k2 = cfg.get<int>("k2", f.k2);
  f.max_outer_iters = cfg.get<int>("max_outer_iters", f.max_outer_iters);
  f.obj_rel_tol = cfg.get<double>("obj_rel_tol", f.obj_rel_tol);
  f.param_tol = cfg.get<double>("param_tol", f.param_tol);
  f.n_restarts = cfg.get<int>("n_restarts", f.n_restarts);
  f.solver_tol = cfg.get<double>("solver_tol", f.solver_tol);
  f.smooth_tol = cfg.get<double>("smooth_tol", f.smooth_tol);
  f.seed = cfg.get<std::uint64_t>("seed", f.seed);
  f.threads = cfg.get<int>("threads", f.threads);
  if (args.seed) f.seed = *args.seed;
  if (args.threads) f.threads = *args.threads;
  return f;
}

std::optional<KernelSpec> read_kernel(Config& cfg, int T) {
  const bool smoothed = cfg.get<bool>("smoothed", false);
  const int order = cfg.get<int>("kernel_order", 8);
  const double c = cfg.get<double>("bandwidth_c", 0.15);
  const double scale = cfg.get<double>("bandwidth_scale", 1.0);
  const double h = cfg.get<double>("bandwidth", 0.0);
  if (!smoothed) return std::nullopt;
  return build_kernel(order, h > 0.0 ? h : default_bandwidth(T, order, c, scale));
}

QuantileLevel read_tau(Config& cfg) { return QuantileLevel(cfg.get<double>("tau", 0.5)); }

FactorParams read_params_dir(const fs::path& dir) {
  FactorParams p;
  p.R = read_matrix_csv((dir / "R.csv").string());
  p.C = read_matrix_csv((dir / "C.csv").string());
  p.F = read_factors_csv((dir / "F.csv").string(), static_cast<int>(p.R.cols()));
  return p;
}

void write_params_dir(const fs::path& dir, const FactorParams& p) {
  fs::create_directories(dir);
  write_matrix_csv((dir / "R.csv").string(), p.R);
  write_matrix_csv((dir / "C.csv").string(), p.C);
  write_factors_csv((dir / "F.csv").string(), p.F);
}

json fit_json(const FitResult& r) {
  return json{{"objective", r.objective},
              {"objective_trace", r.objective_trace},
              {"sigma1", vec_json(r.sigma1)},
              {"sigma2", vec_json(r.sigma2)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"tied_spectrum", r.tied_spectrum},
              {"ridge_used", r.ridge_used}};
}

DgpConfig read_dgp(Config& d) {
  DgpConfig g;
  g.T = d.get<int>("T", g.T);
  g.p1 = d.get<int>("p1", g.p1);
  g.p2 = d.get<int>("p2", g.p2);
  g.k1 = d.get<int>("k1", g.k1);
  g.k2 = d.get<int>("k2", g.k2);
  g.theta_star = d.get<double>("theta_star", g.theta_star);
  g.noise = NoiseLaw::parse(d.get<std::string>("noise", "normal"));
  g.ar_coef = d.get<double>("ar_coef", g.ar_coef);
  g.dependent_errors = d.get<bool>("dependent_errors", g.dependent_errors);
  g.unit_scale = d.get<bool>("unit_scale", g.unit_scale);
  g.seed = d.get<std::uint64_t>("seed", g.seed);
  return g;
}

SelectionMethod parse_selection(const std::string& s) {
  if (s == "RM") return SelectionMethod::RM;
  if (s == "IC") return SelectionMethod::IC;
  if (s == "ER") return SelectionMethod::ER;
  throw ConfigError("unknown selection method '" + s + "' (expected RM, IC or ER)");
}

const char* selection_name(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::RM: return "RM";
    case SelectionMethod::IC: return "IC";
    case SelectionMethod::ER: return "ER";
  }
  return "?";
}

double rmse(const std::vector<double>& e) {
  if (e.empty()) return 0.0;
  double acc = 0.0;
  for (double v : e) acc += v * v;
  return std::sqrt(acc / static_cast<double>(e.size()));
}

}  // namespace

int cmd_fit(const Args& args) {
  Config cfg = Config::load(args.config);
  const auto dims = read_dims(cfg);
  const QuantileLevel tau = read_tau(cfg);
  const FitConfig fcfg = read_fit(cfg, args);
  const std::string truth_dir = cfg.get<std::string>("truth", "");
  const MatrixPanel panel = read_panel(single_input(args), dims);
  const auto kernel = read_kernel(cfg, panel.T());
  cfg.finish();
  const fs::path out = require_out(args);

  const FitResult res = kernel ? smoothed_fit(panel, tau, fcfg, *kernel) : fit(panel, tau, fcfg);
  write_params_dir(out, res.params);
  json diag = fit_json(res);
  diag["tau"] = tau.value();
  diag["k1"] = fcfg.k1;
  diag["k2"] = fcfg.k2;
  diag["smoothed"] = kernel.has_value();
  if (kernel) diag["bandwidth"] = kernel->h;
  diag["rate_L"] = rate_L(panel.p1(), panel.p2(), panel.T()).value;
  if (!truth_dir.empty()) {
    const FactorParams truth = read_params_dir(truth_dir);
    diag["truth"] = {
        {"loading_distance_R", loading_distance(truth.R, res.params.R)},
        {"loading_distance_C", loading_distance(truth.C, res.params.C)},
        {"loading_distance_W",
         loading_distance(kronecker(truth.C, truth.R), kronecker(res.params.C, res.params.R))},
        {"theta_distance", theta_distance(truth, res.params)}};
  }
  write_json(out / "diagnostics.json", diag);
  return res.converged ? kConverged : kMaxIterations;
}

int cmd_select(const Args& args) {
  Config cfg = Config::load(args.config);
  const auto dims = read_dims(cfg);
  const QuantileLevel tau = read_tau(cfg);
  FitConfig fcfg = read_fit(cfg, args);
  const SelectionMethod method = parse_selection(cfg.get<std::string>("method", "ER"));
  SelectionConfig sel;
  sel.K1 = cfg.get<int>("K1", sel.K1);
  sel.K2 = cfg.get<int>("K2", sel.K2);
  sel.c0 = cfg.get<double>("c0", sel.c0);
  sel.ic_full_grid = cfg.get<bool>("ic_full_grid", sel.ic_full_grid);
  const MatrixPanel panel = read_panel(single_input(args), dims);
  cfg.finish();
  const fs::path out = require_out(args);

  const OverfitSigmas over = overfit_sigmas(panel, tau, sel.K1, sel.K2, fcfg);
  const double L = rate_L(panel.p1(), panel.p2(), panel.T()).value;
  SelectionResult res;
  switch (method) {
    case SelectionMethod::RM: res = select_rm(over, L); break;
    case SelectionMethod::ER: res = select_er(over, sel.c0, L); break;
    case SelectionMethod::IC:
      res = select_ic(panel, tau, sel.K1, sel.K2, fcfg, over, sel.ic_full_grid);
      break;
  }
  json j{{"k1_hat", res.k1_hat},
         {"k2_hat", res.k2_hat},
         {"method", selection_name(res.method)},
         {"sigma1", vec_json(res.sigma1_full)},
         {"sigma2", vec_json(res.sigma2_full)},
         {"K1", sel.K1},
         {"K2", sel.K2},
         {"rate_L", L},
         {"tau", tau.value()},
         {"overfit_converged", over.fit.converged}};
  if (method == SelectionMethod::ER)
    j["c0"] = sel.c0;
  else
    j["threshold"] = res.threshold_used;
  if (!res.ic_surface.empty()) {
    json surface = json::array();
    for (const auto& [cell, value] : res.ic_surface)
      surface.push_back({{"l1", cell.first}, {"l2", cell.second}, {"value", value}});
    j["ic_surface"] = surface;
  }
  write_json(out / "selection.json", j);
  return over.fit.converged ? kConverged : kMaxIterations;
}

int cmd_simulate(const Args& args) {
  Config cfg = Config::load(args.config);
  const QuantileLevel tau = read_tau(cfg);
  DgpConfig dgp;
  {
    Config d = cfg.child("dgp");
    dgp = read_dgp(d);
    d.finish();
  }
  dgp.seed = cfg.get<std::uint64_t>("seed", dgp.seed);
  if (args.seed) dgp.seed = *args.seed;
  const std::string format = cfg.get<std::string>("format", "csv");
  const double mask_fraction = cfg.get<double>("mask_fraction", 0.0);
  const double corrupt_fraction = cfg.get<double>("corrupt_fraction", 0.0);
  const double corrupt_magnitude = cfg.get<double>("corrupt_magnitude", 50.0);
  const bool do_standardize = cfg.get<bool>("standardize", false);
  cfg.get<int>("threads", 0);
  cfg.finish();
  if (format != "csv" && format != "dense")
    throw ConfigError("format must be 'csv' or 'dense'");
  if (!args.inputs.empty()) throw ConfigError("simulate takes no --input");
  const fs::path out = require_out(args);

  auto [panel, truth] = gen_panel(dgp, tau);
  const MatrixPanel full = panel;
  if (do_standardize) panel = standardize(panel);
  if (corrupt_fraction > 0.0) panel = corrupt(panel, corrupt_fraction, corrupt_magnitude, dgp.seed + 1);
  if (mask_fraction > 0.0) panel = mask_random(panel, mask_fraction, dgp.seed + 2);

  const std::string name = format == "csv" ? "panel.csv" : "panel.bin";
  if (format == "csv")
    write_long_csv((out / name).string(), panel);
  else
    write_dense((out / name).string(), panel);
  if (mask_fraction > 0.0) write_long_csv((out / "complete.csv").string(), full);
  write_params_dir(out / "truth", truth.params);
  write_json(out / "truth.json", {{"tau", tau.value()},
                                  {"T", dgp.T},
                                  {"p1", dgp.p1},
                                  {"p2", dgp.p2},
                                  {"effective_k1", truth.effective_k1},
                                  {"effective_k2", truth.effective_k2},
                                  {"q_tau", truth.q_tau},
                                  {"theta_star", dgp.theta_star},
                                  {"noise", dgp.noise.name()},
                                  {"dependent_errors", dgp.dependent_errors},
                                  {"seed", dgp.seed},
                                  {"panel", name}});
  return kConverged;
}

int cmd_experiment(const Args& args) {
  Config cfg = Config::load(args.config);
  const QuantileLevel tau = read_tau(cfg);
  ExperimentSettings settings;
  {
    Config d = cfg.child("dgp");
    settings.dgp = read_dgp(d);
    d.finish();
  }
  settings.fit = read_fit(cfg, args);
  settings.dgp.seed = settings.fit.seed;
  settings.selection.K1 = cfg.get<int>("K1", settings.selection.K1);
  settings.selection.K2 = cfg.get<int>("K2", settings.selection.K2);
  settings.selection.c0 = cfg.get<double>("c0", settings.selection.c0);
  settings.selection.ic_full_grid = cfg.get<bool>("ic_full_grid", settings.selection.ic_full_grid);
  settings.selection.k_max = cfg.get<int>("k_max", settings.selection.k_max);
  const std::string kind = cfg.require<std::string>("experiment");
  const int n_reps = cfg.get<int>("n_reps", 1);

  std::vector<GridCell> grid;
  if (cfg.has("grid")) {
    for (const auto& cell : cfg.raw("grid")) {
      Config c(cell, "config.grid[]");
      grid.push_back({c.require<int>("T"), c.require<int>("p1"), c.require<int>("p2"),
                      NoiseLaw::parse(c.get<std::string>("noise", "normal"))});
      c.finish();
    }
  } else {
    cfg.get<int>("grid", 0);
    grid.push_back({settings.dgp.T, settings.dgp.p1, settings.dgp.p2, settings.dgp.noise});
  }
  std::vector<Method> methods;
  for (const auto& m : cfg.get<std::vector<std::string>>("methods", {"RM", "IC", "ER"}))
    methods.push_back(parse_method(m));
  const int kernel_order = cfg.get<int>("kernel_order", 8);
  const double bandwidth_c = cfg.get<double>("bandwidth_c", 0.15);
  const double bandwidth_scale = cfg.get<double>("bandwidth_scale", 1.0);
  cfg.finish();
  const fs::path out = require_out(args);

  auto cell_cols = [](std::ostream& os, const GridCell& c) {
    os << c.T << ',' << c.p1 << ',' << c.p2 << ',' << c.noise.name();
  };
  if (kind == "selection") {
    const auto rows = run_selection_experiment(settings, grid, tau, n_reps, methods);
    std::ofstream os(out / "selection.csv");
    os << "T,p1,p2,noise,method,reps,mean_k1,mean_k2,frequency\n";
    for (const auto& r : rows) {
      cell_cols(os, r.cell);
      os << ',' << method_name(r.method) << ',' << r.reps << ',' << format_double(r.mean_k1) << ','
         << (r.method == Method::VecRM ? std::string() : format_double(r.mean_k2)) << ','
         << format_double(r.frequency) << '\n';
    }
    if (!os) throw IoError("selection.csv: write failed");
  } else if (kind == "loading") {
    const auto rows = run_loading_experiment(settings, grid, tau, n_reps);
    std::ofstream os(out / "loading.csv");
    os << "T,p1,p2,noise,reps,dist_R,dist_C,dist_W\n";
    for (const auto& r : rows) {
      cell_cols(os, r.cell);
      os << ',' << r.reps << ',' << format_double(r.mean_dist_R) << ','
         << format_double(r.mean_dist_C) << ',' << format_double(r.mean_dist_W) << '\n';
    }
    if (!os) throw IoError("loading.csv: write failed");
  } else if (kind == "clt") {
    if (grid.size() != 1) throw ConfigError("clt experiment takes a single grid cell");
    settings.dgp.T = grid[0].T;
    settings.dgp.p1 = grid[0].p1;
    settings.dgp.p2 = grid[0].p2;
    settings.dgp.noise = grid[0].noise;
    const KernelSpec kernel = build_kernel(
        kernel_order, default_bandwidth(grid[0].T, kernel_order, bandwidth_c, bandwidth_scale));
    const CltSample sample = run_clt_experiment(settings, tau, n_reps, kernel);
    std::ofstream os(out / "clt.csv");
    os << "rep,statistic,greedy_statistic,density_at_zero\n";
    for (std::size_t r = 0; r < sample.statistics.size(); ++r)
      os << r << ',' << format_double(sample.statistics[r]) << ','
         << format_double(sample.greedy_statistics[r]) << ','
         << format_double(sample.densities[r]) << '\n';
    if (!os) throw IoError("clt.csv: write failed");
  } else {
    throw ConfigError("unknown experiment '" + kind + "' (expected selection, loading or clt)");
  }
  return kConverged;
}

int cmd_impute(const Args& args) {
  Config cfg = Config::load(args.config);
  const auto dims = read_dims(cfg);
  const QuantileLevel tau = read_tau(cfg);
  const FitConfig fcfg = read_fit(cfg, args);
  const std::string truth_path = cfg.get<std::string>("truth", "");
  const MatrixPanel panel = read_panel(single_input(args), dims);
  cfg.finish();
  const fs::path out = require_out(args);

  const FitResult res = fit(panel, tau, fcfg);
  const MatrixPanel filled = impute(panel, res);
  write_long_csv((out / "imputed.csv").string(), filled);
  json report{{"tau", tau.value()},
              {"n_missing", panel.total() - panel.n_observed()},
              {"converged", res.converged},
              {"objective", res.objective}};
  if (!truth_path.empty()) {
    const MatrixPanel truth = read_panel(truth_path, PanelDims{panel.T(), panel.p1(), panel.p2()});
    std::vector<double> err_model, err_zero;
    for (int t = 0; t < panel.T(); ++t)
      for (int i = 0; i < panel.p1(); ++i)
        for (int j = 0; j < panel.p2(); ++j) {
          if (panel.observed(t, i, j)) continue;
          if (!truth.observed(t, i, j))
            throw InvalidArgument("truth panel lacks a value for a missing entry");
          err_model.push_back(filled.slice(t)(i, j) - truth.slice(t)(i, j));
          err_zero.push_back(truth.slice(t)(i, j));
        }
    const double a1 = rmse(err_model);
    const double a0 = rmse(err_zero);
    double max_abs = 0.0;
    for (double e : err_model) max_abs = std::max(max_abs, std::abs(e));
    report["rmse_model"] = a1;
    report["rmse_zero"] = a0;
    report["rmse_ratio"] = a0 > 0.0 ? a1 / a0 : 0.0;
    report["max_abs_error"] = max_abs;
  }
  write_json(out / "impute.json", report);
  return res.converged ? kConverged : kMaxIterations;
}

int cmd_similarity(const Args& args) {
  if (args.inputs.size() != 2) throw ConfigError("similarity requires two --input values");
  Config cfg = Config::load(args.config);
  cfg.get<int>("threads", 0);
  cfg.finish();
  // A fit output directory stands for its Kronecker loading C (x) R.
  auto load = [](const std::string& path) -> Eigen::MatrixXd {
    if (fs::is_directory(path)) {
      const Eigen::MatrixXd R = read_matrix_csv((fs::path(path) / "R.csv").string());
      const Eigen::MatrixXd C = read_matrix_csv((fs::path(path) / "C.csv").string());
      return kronecker(C, R);
    }
    return read_matrix_csv(path);
  };
  const Eigen::MatrixXd a = load(args.inputs[0]);
  const Eigen::MatrixXd b = load(args.inputs[1]);
  const double s = space_similarity(a, b);
  const json j{{"similarity", s}, {"rows", a.rows()}, {"cols", a.cols()}};
  if (args.out.empty()) {
    std::cout << j.dump() << '\n';
  } else {
    const fs::path out = require_out(args);
    write_json(out / "similarity.json", j);
  }
  return kConverged;
}

int run_guarded(int (*command)(const Args&), const Args& args) {
  auto report = [](const char* category, const std::string& what) {
    std::string msg = what;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << category << ": " << msg << std::endl;
    return kFailure;
  };
  try {
    return command(args);
  } catch (const IoError& e) {
    return report("io", e.what());
  } catch (const ConfigError& e) {
    return report("config", e.what());
  } catch (const DimensionMismatch& e) {
    return report("dimension", e.what());
  } catch (const InvalidArgument& e) {
    return report("invalid_argument", e.what());
  } catch (const Degenerate& e) {
    return report("degenerate", e.what());
  } catch (const fs::filesystem_error& e) {
    return report("io", e.what());
  } catch (const std::exception& e) {
    return report("internal", e.what());
  }
}

}  // namespace mqf::cli
