#include "mqf/simulate.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace mqf {

std::string NoiseLaw::name() const {
  if (kind == Kind::Normal) return "normal";
  std::ostringstream os;
  os << 't' << df;
  return os.str();
}

NoiseLaw NoiseLaw::parse(const std::string& name) {
  if (name == "normal" || name == "N(0,1)" || name == "gaussian") return normal();
  if (name.size() > 1 && (name[0] == 't' || name[0] == 'T')) {
    try {
      std::size_t used = 0;
      const double df = std::stod(name.substr(1), &used);
      if (used == name.size() - 1 && df > 0.0) return student_t(df);
    } catch (const std::exception&) {
    }
  }
  throw InvalidArgument("unknown noise law '" + name + "' (expected normal or t<df>)");
}

void DgpConfig::validate() const {
  if (T < 1 || p1 < 1 || p2 < 1) throw InvalidArgument("DGP dimensions must be positive");
  if (k1 < 1 || k2 < 1 || k1 > p1 || k2 > p2) throw InvalidArgument("DGP ranks out of range");
  if (!(theta_star >= 0.0)) throw InvalidArgument("theta_star must be non-negative");
  if (noise.kind == NoiseLaw::Kind::StudentT && !(noise.df > 0.0))
    throw InvalidArgument("Student-t degrees of freedom must be positive");
  if (!(std::abs(ar_coef) < 1.0)) throw InvalidArgument("AR coefficient must lie in (-1,1)");
}

namespace {

// Characteristic function of one Student-t(df) variable.
double t_charfn(double s, double df) {
  const double a = std::sqrt(df) * std::abs(s);
  if (a == 0.0) return 1.0;
  if (df == 1.0) return std::exp(-a);
  const double nu2 = 0.5 * df;
  // log form avoids overflow of a^{nu/2} against underflow of K.
  const double k = boost::math::cyl_bessel_k(nu2, a);
  if (k == 0.0) return 0.0;
  return std::exp(std::log(k) + nu2 * std::log(a) - boost::math::lgamma(nu2) -
                  (nu2 - 1.0) * std::log(2.0));
}

// CDF of V + c (V' + V'' + V''') by Gil-Pelaez inversion.
double ma_t_cdf(double x, double df) {
  auto phi = [df](double s) {
    return t_charfn(s, df) * std::pow(t_charfn(kMaCoef * s, df), 3);
  };
  double upper = 1.0;
  while (phi(upper) > 1e-18 && upper < 1e4) upper *= 2.0;
  const double width = std::min(0.5, 1.0 / (std::abs(x) + 1.0));
  double acc = 0.0;
  for (double a = 0.0; a < upper; a += width) {
    const double b = std::min(a + width, upper);
    acc += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double s) { return s == 0.0 ? x : std::sin(s * x) * phi(s) / s; }, a, b, 0, 1e-14);
  }
  return 0.5 + acc / M_PI;
}

double standard_quantile(const NoiseLaw& noise, double tau) {
  if (noise.kind == NoiseLaw::Kind::Normal)
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), tau);
  if (noise.df == 1.0) return std::tan(M_PI * (tau - 0.5));
  return boost::math::quantile(boost::math::students_t_distribution<double>(noise.df), tau);
}

}  // namespace

double noise_quantile(const NoiseLaw& noise, double tau, bool dependent_errors) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quantile level must lie in (0,1)");
  if (tau == 0.5) return 0.0;
  if (!dependent_errors) return standard_quantile(noise, tau);
  if (noise.kind == NoiseLaw::Kind::Normal)
    return std::sqrt(1.0 + 3.0 * kMaCoef * kMaCoef) * standard_quantile(noise, tau);
  // Bracket around the single-variable quantile scaled by the coefficient sum.
  const double q0 = standard_quantile(noise, tau);
  double lo = std::min(q0, q0 * (1.0 + 3.0 * kMaCoef)) - 1.0;
  double hi = std::max(q0, q0 * (1.0 + 3.0 * kMaCoef)) + 1.0;
  auto f = [&](double x) { return ma_t_cdf(x, noise.df) - tau; };
  while (f(lo) > 0.0) lo -= 2.0 * (hi - lo);
  while (f(hi) < 0.0) hi += 2.0 * (hi - lo);
  std::uintmax_t iters = 200;
  const auto root = boost::math::tools::toms748_solve(
      f, lo, hi, boost::math::tools::eps_tolerance<double>(45), iters);
  return 0.5 * (root.first + root.second);
}

std::pair<MatrixPanel, SimTruth> gen_panel(const DgpConfig& cfg, QuantileLevel tau) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
  };
  const int T = cfg.T, p1 = cfg.p1, p2 = cfg.p2;
  const double a = cfg.ar_coef;
  const double stationary_sd = 1.0 / std::sqrt(1.0 - a * a);

  FactorParams raw;
  raw.R = draw(p1, cfg.k1);
  raw.C = draw(p2, cfg.k2);
  Eigen::MatrixXd f_prev = stationary_sd * draw(cfg.k1, cfg.k2);
  raw.F.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    f_prev = a * f_prev + draw(cfg.k1, cfg.k2);
    raw.F.push_back(f_prev);
  }
  std::vector<double> g(static_cast<std::size_t>(T), 1.0);
  if (!cfg.unit_scale) {
    double g_prev = stationary_sd * normal(rng);
    for (int t = 0; t < T; ++t) {
      g_prev = a * g_prev + normal(rng);
      g[t] = g_prev;
    }
  }

  auto noise_draw = [&]() -> double {
    if (cfg.noise.kind == NoiseLaw::Kind::Normal) return normal(rng);
    std::student_t_distribution<double> st(cfg.noise.df);
    return st(rng);
  };
  std::vector<Eigen::MatrixXd> E(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    E[t].resize(p1, p2);
    for (int j = 0; j < p2; ++j)
      for (int i = 0; i < p1; ++i) E[t](i, j) = noise_draw();
  }
  if (cfg.dependent_errors) {
    // eps_ijt = V_ijt + 0.2 (V_ij,t-1 + V_i-1,jt + V_i,j-1,t); lags outside the
    // grid contribute zero.
    std::vector<Eigen::MatrixXd> eps(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      eps[t] = E[t];
      if (t > 0) eps[t] += kMaCoef * E[t - 1];
      eps[t].bottomRows(p1 - 1) += kMaCoef * E[t].topRows(p1 - 1);
      eps[t].rightCols(p2 - 1) += kMaCoef * E[t].leftCols(p2 - 1);
    }
    E = std::move(eps);
  }

  std::vector<Eigen::MatrixXd> values(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    values[t] = raw.R * raw.F[t] * raw.C.transpose() + cfg.theta_star * g[t] * E[t];

  SimTruth truth;
  truth.q_tau = noise_quantile(cfg.noise, tau.value(), cfg.dependent_errors);
  const bool augment = cfg.theta_star * truth.q_tau != 0.0;
  if (!augment) {
    truth.params = normalize(raw);
    truth.effective_k1 = cfg.k1;
    truth.effective_k2 = cfg.k2;
  } else {
    // Q_tau(theta* g_t e) = theta* |g_t| q_tau for symmetric e.
    FactorParams aug;
    aug.R.resize(p1, cfg.k1 + 1);
    aug.R << raw.R, Eigen::VectorXd::Ones(p1);
    aug.C.resize(p2, cfg.k2 + 1);
    aug.C << raw.C, Eigen::VectorXd::Ones(p2);
    aug.F.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      Eigen::MatrixXd f = Eigen::MatrixXd::Zero(cfg.k1 + 1, cfg.k2 + 1);
      f.topLeftCorner(cfg.k1, cfg.k2) = raw.F[t];
      f(cfg.k1, cfg.k2) = cfg.theta_star * truth.q_tau * std::abs(g[t]);
      aug.F.push_back(std::move(f));
    }
    truth.params = normalize(aug);
    truth.effective_k1 = cfg.k1 + 1;
    truth.effective_k2 = cfg.k2 + 1;
  }
  return {MatrixPanel(std::move(values)), std::move(truth)};
}

namespace {

struct Cell {
  int t, i, j;
};

std::vector<Cell> observed_cells(const MatrixPanel& panel) {
  std::vector<Cell> cells;
  cells.reserve(panel.n_observed());
  for (int t = 0; t < panel.T(); ++t)
    for (int j = 0; j < panel.p2(); ++j)
      for (int i = 0; i < panel.p1(); ++i)
        if (panel.observed(t, i, j)) cells.push_back({t, i, j});
  return cells;
}

// First `count` entries of a seeded Fisher-Yates shuffle.
void partial_shuffle(std::vector<Cell>& cells, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
    std::swap(cells[k], cells[pick(rng)]);
  }
}

}  // namespace

MatrixPanel corrupt(const MatrixPanel& panel, double fraction, double magnitude,
                    std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("corruption fraction must lie in [0,1]");
  std::vector<Cell> cells = observed_cells(panel);
  const std::size_t count = std::min(
      cells.size(), static_cast<std::size_t>(std::floor(fraction * static_cast<double>(panel.total()))));
  std::mt19937_64 rng(seed);
  partial_shuffle(cells, count, rng);
  std::bernoulli_distribution coin(0.5);
  std::vector<Eigen::MatrixXd> values = panel.values();
  for (std::size_t k = 0; k < count; ++k) {
    const Cell& c = cells[k];
    values[c.t](c.i, c.j) = coin(rng) ? magnitude : -magnitude;
  }
  return MatrixPanel(std::move(values), panel.masks());
}

MatrixPanel mask_random(const MatrixPanel& panel, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("mask fraction must lie in [0,1]");
  std::vector<Cell> cells = observed_cells(panel);
  const std::size_t want =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(panel.total())));
  if (want >= cells.size()) throw InvalidArgument("masking would remove every observed entry");
  std::mt19937_64 rng(seed);
  partial_shuffle(cells, want, rng);
  std::vector<Mask> masks = panel.masks();
  for (std::size_t k = 0; k < want; ++k) masks[cells[k].t](cells[k].i, cells[k].j) = false;
  return MatrixPanel(panel.values(), std::move(masks));
}

MatrixPanel standardize(const MatrixPanel& panel) {
  std::vector<Eigen::MatrixXd> values = panel.values();
  for (int j = 0; j < panel.p2(); ++j)
    for (int i = 0; i < panel.p1(); ++i) {
      double sum = 0.0, sq = 0.0;
      int n = 0;
      for (int t = 0; t < panel.T(); ++t)
        if (panel.observed(t, i, j)) {
          sum += values[t](i, j);
          ++n;
        }
      if (n == 0) continue;
      const double mean = sum / n;
      for (int t = 0; t < panel.T(); ++t)
        if (panel.observed(t, i, j)) sq += (values[t](i, j) - mean) * (values[t](i, j) - mean);
      const double sd = n > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
      for (int t = 0; t < panel.T(); ++t) {
        if (!panel.observed(t, i, j)) continue;
        values[t](i, j) -= mean;
        if (sd > 0.0) values[t](i, j) /= sd;
      }
    }
  return MatrixPanel(std::move(values), panel.masks());
}

std::string method_name(Method m) {
  switch (m) {
    case Method::RM: return "mqf-RM";
    case Method::IC: return "mqf-IC";
    case Method::ER: return "mqf-ER";
    case Method::VecRM: return "vqf-RM";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "RM" || name == "rm" || name == "mqf-RM") return Method::RM;
  if (name == "IC" || name == "ic" || name == "mqf-IC") return Method::IC;
  if (name == "ER" || name == "er" || name == "mqf-ER") return Method::ER;
  if (name == "VRM" || name == "vrm" || name == "vqf-RM" || name == "vec-RM") return Method::VecRM;
  throw InvalidArgument("unknown selection method '" + name + "'");
}

namespace {

DgpConfig cell_dgp(const ExperimentSettings& s, const GridCell& cell, int rep) {
  DgpConfig d = s.dgp;
  d.T = cell.T;
  d.p1 = cell.p1;
  d.p2 = cell.p2;
  d.noise = cell.noise;
  d.seed = s.dgp.seed + static_cast<std::uint64_t>(rep);
  return d;
}

FitConfig rep_fit(const ExperimentSettings& s, int rep, int k1, int k2) {
  FitConfig f = s.fit;
  f.k1 = k1;
  f.k2 = k2;
  f.seed = s.fit.seed + static_cast<std::uint64_t>(rep);
  return f;
}

}  // namespace

std::vector<SelectionRow> run_selection_experiment(const ExperimentSettings& settings,
                                                   const std::vector<GridCell>& grid,
                                                   QuantileLevel tau, int n_reps,
                                                   const std::vector<Method>& methods) {
  if (n_reps < 1) throw InvalidArgument("n_reps must be positive");
  const auto has = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  std::vector<SelectionRow> rows;
  for (const GridCell& cell : grid) {
    std::vector<SelectionRow> cell_rows;
    for (Method m : methods) cell_rows.push_back({cell, m, n_reps, 0.0, 0.0, 0.0});
    auto row_of = [&](Method m) -> SelectionRow& {
      for (auto& r : cell_rows)
        if (r.method == m) return r;
      throw InvalidArgument("method not requested");
    };
    for (int rep = 0; rep < n_reps; ++rep) {
      const auto [panel, truth] = gen_panel(cell_dgp(settings, cell, rep), tau);
      const FitConfig fcfg = rep_fit(settings, rep, truth.effective_k1, truth.effective_k2);
      const auto& sel = settings.selection;
      const double L = rate_L(panel.p1(), panel.p2(), panel.T()).value;
      auto record = [&](Method m, int k1, int k2) {
        SelectionRow& r = row_of(m);
        r.mean_k1 += k1;
        r.mean_k2 += k2;
        if (k1 == truth.effective_k1 && k2 == truth.effective_k2) r.frequency += 1.0;
      };
      if (has(Method::RM) || has(Method::ER) || has(Method::IC)) {
        const OverfitSigmas over = overfit_sigmas(panel, tau, sel.K1, sel.K2, fcfg);
        if (has(Method::RM)) {
          const auto r = select_rm(over, L);
          record(Method::RM, r.k1_hat, r.k2_hat);
        }
        if (has(Method::ER)) {
          const auto r = select_er(over, sel.c0, L);
          record(Method::ER, r.k1_hat, r.k2_hat);
        }
        if (has(Method::IC)) {
          const auto r = select_ic(panel, tau, sel.K1, sel.K2, fcfg, over, sel.ic_full_grid);
          record(Method::IC, r.k1_hat, r.k2_hat);
        }
      }
      if (has(Method::VecRM)) {
        const int k = vec_select_rm(panel, tau, sel.k_max, fcfg);
        SelectionRow& r = row_of(Method::VecRM);
        r.mean_k1 += k;
        if (k == truth.effective_k1 * truth.effective_k2) r.frequency += 1.0;
      }
    }
    for (auto& r : cell_rows) {
      r.mean_k1 /= n_reps;
      r.mean_k2 /= n_reps;
      r.frequency /= n_reps;
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<LoadingRow> run_loading_experiment(const ExperimentSettings& settings,
                                               const std::vector<GridCell>& grid,
                                               QuantileLevel tau, int n_reps) {
  if (n_reps < 1) throw InvalidArgument("n_reps must be positive");
  std::vector<LoadingRow> rows;
  for (const GridCell& cell : grid) {
    LoadingRow row{cell, n_reps, 0.0, 0.0, 0.0};
    for (int rep = 0; rep < n_reps; ++rep) {
      const auto [panel, truth] = gen_panel(cell_dgp(settings, cell, rep), tau);
      const FitResult res =
          fit(panel, tau, rep_fit(settings, rep, truth.effective_k1, truth.effective_k2));
      const FactorParams& est = res.params;
      row.mean_dist_R += loading_distance(truth.params.R, est.R);
      row.mean_dist_C += loading_distance(truth.params.C, est.C);
      row.mean_dist_W += loading_distance(kronecker(truth.params.C, truth.params.R),
                                          kronecker(est.C, est.R));
    }
    row.mean_dist_R /= n_reps;
    row.mean_dist_C /= n_reps;
    row.mean_dist_W /= n_reps;
    rows.push_back(row);
  }
  return rows;
}

ColumnAlignment align_columns(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw DimensionMismatch("alignment requires identically shaped matrices");
  const Eigen::Index k = truth.cols();
  auto corr = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ac = a.array() - a.mean();
    const Eigen::VectorXd bc = b.array() - b.mean();
    const double denom = ac.norm() * bc.norm();
    return denom > 0.0 ? ac.dot(bc) / denom : 0.0;
  };
  Eigen::MatrixXd c(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) c(a, b) = corr(truth.col(a), estimate.col(b));

  ColumnAlignment out;
  out.aligned.resize(truth.rows(), k);
  out.source.assign(static_cast<std::size_t>(k), -1);
  std::vector<bool> used_t(static_cast<std::size_t>(k), false);
  std::vector<bool> used_e(static_cast<std::size_t>(k), false);
  for (Eigen::Index step = 0; step < k; ++step) {
    Eigen::Index best_a = -1, best_b = -1;
    double best = -1.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      if (used_t[a]) continue;
      for (Eigen::Index b = 0; b < k; ++b) {
        if (used_e[b]) continue;
        if (std::abs(c(a, b)) > best) {
          best = std::abs(c(a, b));
          best_a = a;
          best_b = b;
        }
      }
    }
    used_t[best_a] = used_e[best_b] = true;
    out.source[best_a] = static_cast<int>(best_b);
    const double sign = truth.col(best_a).dot(estimate.col(best_b)) < 0.0 ? -1.0 : 1.0;
    out.aligned.col(best_a) = sign * estimate.col(best_b);
  }
  return out;
}

Eigen::MatrixXd align_rotation(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw DimensionMismatch("alignment requires identically shaped matrices");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(estimate.transpose() * truth,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  return estimate * (svd.matrixU() * svd.matrixV().transpose());
}

CltSample run_clt_experiment(const ExperimentSettings& settings, QuantileLevel tau, int n_reps,
                             const KernelSpec& kernel) {
  if (n_reps < 1) throw InvalidArgument("n_reps must be positive");
  kernel.validate();
  CltSample out;
  const double t = tau.value();
  for (int rep = 0; rep < n_reps; ++rep) {
    DgpConfig d = settings.dgp;
    d.theta_star = 1.0;
    d.unit_scale = true;
    d.ar_coef = 0.0;
    d.seed = settings.dgp.seed + static_cast<std::uint64_t>(rep);
    const auto [panel, truth] = gen_panel(d, tau);
    const FitConfig fcfg = rep_fit(settings, rep, truth.effective_k1, truth.effective_k2);
    const FitResult res = smoothed_fit(panel, tau, fcfg, kernel);
    const AsymptoticStats stats = asymptotic_stats(panel, res, tau);
    const double scale = std::sqrt(static_cast<double>(panel.T()) * panel.p2());
    const double sd = std::sqrt(t * (1.0 - t)) / (stats.density_at_zero * std::sqrt(res.sigma1[0]));
    const double r11 = truth.params.R(0, 0);
    out.statistics.push_back(scale * (align_rotation(truth.params.R, res.params.R)(0, 0) - r11) / sd);
    out.greedy_statistics.push_back(
        scale * (align_columns(truth.params.R, res.params.R).aligned(0, 0) - r11) / sd);
    out.densities.push_back(stats.density_at_zero);
  }
  return out;
}

}  // namespace mqf
