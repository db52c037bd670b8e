#include "mqf/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mqf/parallel.hpp"
#include "mqf/qrsolve.hpp"

namespace mqf {

void FitConfig::validate(int p1, int p2) const {
  if (k1 < 1 || k2 < 1) throw InvalidArgument("k1 and k2 must be positive");
  if (k1 > p1 || k2 > p2) {
    std::ostringstream os;
    os << "factor numbers (" << k1 << ", " << k2 << ") exceed panel dimensions (" << p1 << ", "
       << p2 << ")";
    throw InvalidArgument(os.str());
  }
  if (max_outer_iters < 1) throw InvalidArgument("max_outer_iters must be positive");
  if (!(obj_rel_tol > 0.0) || !(param_tol > 0.0) || !(solver_tol > 0.0) || !(smooth_tol > 0.0))
    throw InvalidArgument("tolerances must be positive");
  if (n_restarts < 1) throw InvalidArgument("n_restarts must be positive");
}

namespace {

// Panel rearranged for the row and column subproblems.
//   by_row: (p2 T) x p1, entry (j + p2 t, i) = X_t(i, j)
//   by_col: (p1 T) x p2, entry (i + p1 t, j) = X_t(i, j)
struct StackedPanel {
  Eigen::MatrixXd by_row;
  Eigen::MatrixXd by_col;
  Mask by_row_mask;
  Mask by_col_mask;
  std::vector<Eigen::VectorXd> slices;  // vec(X_t), observed entries only
  bool full = true;

  explicit StackedPanel(const MatrixPanel& panel) {
    const int T = panel.T(), p1 = panel.p1(), p2 = panel.p2();
    full = panel.fully_observed();
    by_row.resize(static_cast<Eigen::Index>(p2) * T, p1);
    by_col.resize(static_cast<Eigen::Index>(p1) * T, p2);
    by_row_mask.resize(by_row.rows(), by_row.cols());
    by_col_mask.resize(by_col.rows(), by_col.cols());
    slices.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      const auto& x = panel.slice(t);
      const auto& m = panel.mask(t);
      by_row.middleRows(static_cast<Eigen::Index>(p2) * t, p2) = x.transpose();
      by_col.middleRows(static_cast<Eigen::Index>(p1) * t, p1) = x;
      by_row_mask.middleRows(static_cast<Eigen::Index>(p2) * t, p2) = m.transpose();
      by_col_mask.middleRows(static_cast<Eigen::Index>(p1) * t, p1) = m;
      std::vector<double> obs;
      obs.reserve(static_cast<std::size_t>(p1) * p2);
      for (int j = 0; j < p2; ++j)
        for (int i = 0; i < p1; ++i)
          if (m(i, j)) obs.push_back(x(i, j));
      slices[t] = Eigen::Map<Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    }
  }
};

void require_nonempty_slices(const MatrixPanel& panel) {
  const int T = panel.T(), p1 = panel.p1(), p2 = panel.p2();
  for (int i = 0; i < p1; ++i) {
    bool any = false;
    for (int t = 0; t < T && !any; ++t) any = panel.mask(t).row(i).any();
    if (!any) throw Degenerate("row " + std::to_string(i + 1) + " has no observed entries");
  }
  for (int j = 0; j < p2; ++j) {
    bool any = false;
    for (int t = 0; t < T && !any; ++t) any = panel.mask(t).col(j).any();
    if (!any) throw Degenerate("column " + std::to_string(j + 1) + " has no observed entries");
  }
  for (int t = 0; t < T; ++t)
    if (!panel.mask(t).any())
      throw Degenerate("time " + std::to_string(t + 1) + " has no observed entries");
}

struct Compact {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Compact compact_rows(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                     const Eigen::Ref<const Mask>& include) {
  const Eigen::Index n = include.count();
  Compact out{Eigen::MatrixXd(n, design.cols()), Eigen::VectorXd(n)};
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < design.rows(); ++r) {
    if (!include(r, 0)) continue;
    out.x.row(k) = design.row(r);
    out.y[k] = y[r];
    ++k;
  }
  return out;
}

// Per-subproblem solver: unsmoothed interior point or smoothed Newton.
struct SubSolver {
  double tau;
  const KernelSpec* kernel;  // null for the unsmoothed check loss
  QrOptions opts;
  QrOptions smooth_opts;

  template <class D>
  QrSolution operator()(const D& design, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& warm) const {
    if (kernel == nullptr) return solve_qr_design(design, y, tau, &warm, opts);
    return solve_qr_smoothed_design(design, y, tau, *kernel, warm, smooth_opts);
  }
};

class AlternatingFit {
 public:
  AlternatingFit(const MatrixPanel& panel, const StackedPanel& stacked, const FitConfig& cfg,
                 SubSolver solver)
      : panel_(panel), stacked_(stacked), cfg_(cfg), solver_(solver),
        threads_(resolve_threads(cfg.threads)) {}

  double loss(const FactorParams& theta) const {
    if (solver_.kernel == nullptr) return objective(panel_, theta, QuantileLevel(solver_.tau));
    return smoothed_objective(panel_, theta, QuantileLevel(solver_.tau), *solver_.kernel);
  }

  FitResult run(FactorParams theta) {
    FitResult res;
    double prev = loss(theta);
    for (int it = 1; it <= cfg_.max_outer_iters; ++it) {
      const FactorParams before = theta;
      update_rows(theta);
      theta = renormalize(theta, res);
      update_factors(theta);
      update_cols(theta);
      theta = renormalize(theta, res);
      const double cur = loss(theta);
      res.objective_trace.push_back(cur);
      res.iterations = it;
      const double obj_change = std::abs(prev - cur);
      const bool obj_done = obj_change <= cfg_.obj_rel_tol * std::abs(prev) ||
                            (prev == 0.0 && cur == 0.0);
      const bool par_done = theta_distance(before, theta) < cfg_.param_tol;
      prev = cur;
      if (obj_done || par_done) {
        res.converged = true;
        break;
      }
    }
    res.params = std::move(theta);
    res.objective = prev;
    std::tie(res.sigma1, res.sigma2) = factor_sigmas(res.params);
    return res;
  }

 private:
  FactorParams renormalize(const FactorParams& theta, FitResult& res) const {
    NormalizeReport rep = normalize_report(theta, false);
    res.tied_spectrum = rep.tied_spectrum;
    return std::move(rep.params);
  }

  // Step II: r_i from responses X_{ijt} with design rows (F_t c_j)'.
  void update_rows(FactorParams& theta) {
    const int T = theta.T(), p1 = theta.p1(), p2 = theta.p2(), k1 = theta.k1();
    Eigen::MatrixXd design(static_cast<Eigen::Index>(p2) * T, k1);
    for (int t = 0; t < T; ++t)
      design.middleRows(static_cast<Eigen::Index>(p2) * t, p2) = theta.C * theta.F[t].transpose();
    Eigen::MatrixXd next = theta.R;
    std::vector<char> ridge(static_cast<std::size_t>(p1), 0);
    parallel_for(p1, threads_, [&](int i) {
      const Eigen::VectorXd warm = theta.R.row(i).transpose();
      const Eigen::VectorXd y = stacked_.by_row.col(i);
      QrSolution s;
      if (stacked_.full) {
        s = solver_(DenseDesign(design), y, warm);
      } else {
        const Compact c = compact_rows(design, y, stacked_.by_row_mask.col(i));
        s = solver_(DenseDesign(c.x), c.y, warm);
      }
      next.row(i) = s.beta.transpose();
      ridge[i] = s.ridge_used;
    });
    theta.R = std::move(next);
    ridge_used_ = ridge_used_ || std::any_of(ridge.begin(), ridge.end(), [](char c) { return c; });
  }

  // Step III: vec(F_t) with design rows (c_j (x) r_i)'.
  void update_factors(FactorParams& theta) {
    const int T = theta.T();
    std::vector<Eigen::MatrixXd> next = theta.F;
    std::vector<char> ridge(static_cast<std::size_t>(T), 0);
    parallel_for(T, threads_, [&](int t) {
      const Eigen::VectorXd warm =
          Eigen::Map<const Eigen::VectorXd>(theta.F[t].data(), theta.F[t].size());
      QrSolution s;
      if (stacked_.full) {
        s = solver_(KroneckerDesign(theta.R, theta.C), stacked_.slices[t], warm);
      } else {
        s = solver_(KroneckerDesign(theta.R, theta.C, panel_.mask(t)), stacked_.slices[t], warm);
      }
      next[t] = Eigen::Map<const Eigen::MatrixXd>(s.beta.data(), theta.k1(), theta.k2());
      ridge[t] = s.ridge_used;
    });
    theta.F = std::move(next);
    ridge_used_ = ridge_used_ || std::any_of(ridge.begin(), ridge.end(), [](char c) { return c; });
  }

  // Step IV: c_j from responses X_{ijt} with design rows (F_t' r_i)'.
  void update_cols(FactorParams& theta) {
    const int T = theta.T(), p1 = theta.p1(), p2 = theta.p2(), k2 = theta.k2();
    Eigen::MatrixXd design(static_cast<Eigen::Index>(p1) * T, k2);
    for (int t = 0; t < T; ++t)
      design.middleRows(static_cast<Eigen::Index>(p1) * t, p1) = theta.R * theta.F[t];
    Eigen::MatrixXd next = theta.C;
    std::vector<char> ridge(static_cast<std::size_t>(p2), 0);
    parallel_for(p2, threads_, [&](int j) {
      const Eigen::VectorXd warm = theta.C.row(j).transpose();
      const Eigen::VectorXd y = stacked_.by_col.col(j);
      QrSolution s;
      if (stacked_.full) {
        s = solver_(DenseDesign(design), y, warm);
      } else {
        const Compact c = compact_rows(design, y, stacked_.by_col_mask.col(j));
        s = solver_(DenseDesign(c.x), c.y, warm);
      }
      next.row(j) = s.beta.transpose();
      ridge[j] = s.ridge_used;
    });
    theta.C = std::move(next);
    ridge_used_ = ridge_used_ || std::any_of(ridge.begin(), ridge.end(), [](char c) { return c; });
  }

 public:
  bool ridge_used() const { return ridge_used_; }

 private:
  const MatrixPanel& panel_;
  const StackedPanel& stacked_;
  const FitConfig& cfg_;
  SubSolver solver_;
  int threads_;
  bool ridge_used_ = false;
};

SubSolver make_solver(QuantileLevel tau, const FitConfig& cfg, const KernelSpec* kernel) {
  SubSolver s{tau.value(), kernel, {}, {}};
  s.opts.tol = cfg.solver_tol;
  s.smooth_opts.tol = cfg.smooth_tol;
  return s;
}

}  // namespace

FitResult fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config) {
  config.validate(panel.p1(), panel.p2());
  require_nonempty_slices(panel);
  const StackedPanel stacked(panel);
  FitResult best;
  bool have_best = false;
  for (int r = 0; r < config.n_restarts; ++r) {
    const FactorParams start = init_random(panel.p1(), panel.p2(), panel.T(), config.k1,
                                           config.k2, config.seed + static_cast<std::uint64_t>(r));
    AlternatingFit runner(panel, stacked, config, make_solver(tau, config, nullptr));
    FitResult res = runner.run(start);
    res.ridge_used = runner.ridge_used();
    if (!have_best || res.objective < best.objective) {
      best = std::move(res);
      have_best = true;
    }
  }
  return best;
}

FitResult smoothed_fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config,
                       const KernelSpec& kernel, const FactorParams& start) {
  kernel.validate();
  config.validate(panel.p1(), panel.p2());
  require_nonempty_slices(panel);
  check_dims(panel, start);
  if (start.k1() != config.k1 || start.k2() != config.k2)
    throw DimensionMismatch("start parameters do not match configured factor numbers");
  const StackedPanel stacked(panel);
  AlternatingFit runner(panel, stacked, config, make_solver(tau, config, &kernel));
  FitResult res = runner.run(normalize_report(start, false).params);
  res.ridge_used = runner.ridge_used();
  return res;
}

FitResult smoothed_fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config,
                       const KernelSpec& kernel) {
  kernel.validate();
  const FitResult base = fit(panel, tau, config);
  return smoothed_fit(panel, tau, config, kernel, base.params);
}

double residual_density_at_zero(const MatrixPanel& panel, const FactorParams& theta,
                                QuantileLevel tau, double bandwidth, double* used_bandwidth) {
  check_dims(panel, theta);
  const auto common = common_component(theta);
  std::vector<double> e;
  e.reserve(panel.n_observed());
  for (int t = 0; t < panel.T(); ++t)
    for (int j = 0; j < panel.p2(); ++j)
      for (int i = 0; i < panel.p1(); ++i)
        if (panel.observed(t, i, j)) e.push_back(panel.slice(t)(i, j) - common[t](i, j));
  const std::size_t n = e.size();
  if (n < 2) throw Degenerate("density estimate needs at least two residuals");

  std::vector<double> sorted = e;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double centre = quantile(tau.value());

  if (!(bandwidth > 0.0)) {
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : e) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
    const double spread = iqr > 0.0 ? std::min(sd, iqr) : sd;
    if (!(spread > 0.0) || !std::isfinite(spread))
      throw Degenerate("residuals have zero spread");
    bandwidth = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }
  if (used_bandwidth != nullptr) *used_bandwidth = bandwidth;
  const double inv_b = 1.0 / bandwidth;
  double acc = 0.0;
  for (double v : sorted) {
    const double z = (v - centre) * inv_b;
    if (std::abs(z) < 40.0) acc += std::exp(-0.5 * z * z);
  }
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return acc * kInvSqrt2Pi * inv_b / static_cast<double>(n);
}

Eigen::MatrixXd AsymptoticStats::row_covariance(int i, double tau) const {
  const Eigen::MatrixXd phi_inv = phi.at(static_cast<std::size_t>(i)).inverse();
  return tau * (1.0 - tau) * phi_inv * sigma1.asDiagonal() * phi_inv;
}

AsymptoticStats asymptotic_stats(const MatrixPanel& panel, const FitResult& fit, QuantileLevel tau,
                                 double density_bandwidth) {
  const FactorParams& theta = fit.params;
  check_dims(panel, theta);
  AsymptoticStats out;
  out.sigma1 = fit.sigma1;
  out.sigma2 = fit.sigma2;
  out.density_at_zero =
      residual_density_at_zero(panel, theta, tau, density_bandwidth, &out.density_bandwidth);
  const int T = panel.T(), p1 = panel.p1(), p2 = panel.p2(), k1 = theta.k1();
  const double scale = out.density_at_zero / (static_cast<double>(T) * p2);
  // H_t = F_t C', column j is F_t c_j.
  std::vector<Eigen::MatrixXd> h(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) h[t] = theta.F[t] * theta.C.transpose();
  Eigen::MatrixXd all = Eigen::MatrixXd::Zero(k1, k1);
  for (int t = 0; t < T; ++t) all.noalias() += h[t] * h[t].transpose();
  out.phi.resize(static_cast<std::size_t>(p1));
  for (int i = 0; i < p1; ++i) {
    if (panel.fully_observed()) {
      out.phi[i] = scale * all;
      continue;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(k1, k1);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < p2; ++j)
        if (panel.observed(t, i, j)) acc.noalias() += h[t].col(j) * h[t].col(j).transpose();
    out.phi[i] = scale * acc;
  }
  return out;
}

MatrixPanel impute(const MatrixPanel& panel, const FitResult& fit) {
  check_dims(panel, fit.params);
  const auto common = common_component(fit.params);
  std::vector<Eigen::MatrixXd> values = panel.values();
  for (int t = 0; t < panel.T(); ++t)
    for (int j = 0; j < panel.p2(); ++j)
      for (int i = 0; i < panel.p1(); ++i)
        if (!panel.observed(t, i, j)) values[t](i, j) = common[t](i, j);
  return MatrixPanel(std::move(values));
}

}  // namespace mqf
