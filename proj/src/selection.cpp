#include "mqf/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mqf {

namespace {

FitConfig with_ranks(const FitConfig& base, int k1, int k2) {
  FitConfig cfg = base;
  cfg.k1 = k1;
  cfg.k2 = k2;
  // Distinct deterministic seeds per candidate model.
  cfg.seed = base.seed + 7919ULL * static_cast<std::uint64_t>(k1) +
             104729ULL * static_cast<std::uint64_t>(k2);
  return cfg;
}

void check_bounds(const MatrixPanel& panel, int K1, int K2) {
  if (K1 < 1 || K2 < 1) throw InvalidArgument("K1 and K2 must be positive");
  if (K1 > panel.p1() || K2 > panel.p2())
    throw InvalidArgument("K1/K2 exceed panel dimensions");
}

double panel_L(const MatrixPanel& panel) { return rate_L(panel.p1(), panel.p2(), panel.T()).value; }

}  // namespace

OverfitSigmas overfit_sigmas(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                             const FitConfig& config) {
  check_bounds(panel, K1, K2);
  OverfitSigmas out;
  out.fit = fit(panel, tau, with_ranks(config, K1, K2));
  out.sigma1 = out.fit.sigma1;
  out.sigma2 = out.fit.sigma2;
  return out;
}

double rm_threshold(const Eigen::VectorXd& sigma1, const Eigen::VectorXd& sigma2, double L) {
  const double delta = 0.5 * (sigma1[0] + sigma2[0]);
  return delta * std::pow(L, -2.0 / 3.0);
}

double ic_threshold(const Eigen::VectorXd& sigma1, const Eigen::VectorXd& sigma2, double L) {
  const double delta = 0.5 * (sigma1[0] + sigma2[0]);
  return delta / L;
}

int count_above(const Eigen::VectorXd& sigma, double threshold) {
  return static_cast<int>((sigma.array() > threshold).count());
}

int eigen_ratio_argmax(const Eigen::VectorXd& sigma, double c0, double L) {
  if (sigma.size() < 2) throw InvalidArgument("eigenvalue ratio needs at least two sigmas");
  const double floor = c0 / (L * L);
  int best = 1;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < sigma.size(); ++k) {
    const double ratio = sigma[k] / (sigma[k + 1] + floor);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = static_cast<int>(k) + 1;
    }
  }
  return best;
}

SelectionResult select_rm(const OverfitSigmas& overfit, double L) {
  SelectionResult res;
  res.method = SelectionMethod::RM;
  res.sigma1_full = overfit.sigma1;
  res.sigma2_full = overfit.sigma2;
  res.threshold_used = rm_threshold(overfit.sigma1, overfit.sigma2, L);
  res.k1_hat = std::max(1, count_above(overfit.sigma1, res.threshold_used));
  res.k2_hat = std::max(1, count_above(overfit.sigma2, res.threshold_used));
  return res;
}

SelectionResult select_rm(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config) {
  return select_rm(overfit_sigmas(panel, tau, K1, K2, config), panel_L(panel));
}

SelectionResult select_er(const OverfitSigmas& overfit, double c0, double L) {
  if (!(c0 > 0.0)) throw InvalidArgument("c0 must be positive");
  SelectionResult res;
  res.method = SelectionMethod::ER;
  res.sigma1_full = overfit.sigma1;
  res.sigma2_full = overfit.sigma2;
  res.threshold_used = c0;
  res.k1_hat = eigen_ratio_argmax(overfit.sigma1, c0, L);
  res.k2_hat = eigen_ratio_argmax(overfit.sigma2, c0, L);
  return res;
}

SelectionResult select_er(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2, double c0,
                          const FitConfig& config) {
  if (K1 < 2 || K2 < 2) throw InvalidArgument("eigenvalue ratio needs K1, K2 >= 2");
  return select_er(overfit_sigmas(panel, tau, K1, K2, config), c0, panel_L(panel));
}

SelectionResult select_ic(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config, const OverfitSigmas& overfit, bool full_grid) {
  check_bounds(panel, K1, K2);
  SelectionResult res;
  res.method = SelectionMethod::IC;
  res.sigma1_full = overfit.sigma1;
  res.sigma2_full = overfit.sigma2;
  const double C = ic_threshold(overfit.sigma1, overfit.sigma2, panel_L(panel));
  res.threshold_used = C;

  auto penalized = [&](int l1, int l2) {
    const auto key = std::make_pair(l1, l2);
    if (auto it = res.ic_surface.find(key); it != res.ic_surface.end()) return it->second;
    const double loss = (l1 == K1 && l2 == K2)
                            ? overfit.fit.objective
                            : fit(panel, tau, with_ranks(config, l1, l2)).objective;
    const double value = loss + (l1 + l2) * C;
    res.ic_surface.emplace(key, value);
    return value;
  };
  auto argmin = [](int lo, int hi, auto&& f) {
    int best = lo;
    double best_value = std::numeric_limits<double>::infinity();
    for (int l = lo; l <= hi; ++l) {
      const double v = f(l);
      if (v < best_value) {
        best_value = v;
        best = l;
      }
    }
    return best;
  };

  if (full_grid) {
    double best_value = std::numeric_limits<double>::infinity();
    for (int l1 = 1; l1 <= K1; ++l1)
      for (int l2 = 1; l2 <= K2; ++l2) {
        const double v = penalized(l1, l2);
        if (v < best_value) {
          best_value = v;
          res.k1_hat = l1;
          res.k2_hat = l2;
        }
      }
    return res;
  }
  res.k1_hat = argmin(1, K1, [&](int l1) { return penalized(l1, K2); });
  res.k2_hat = argmin(1, K2, [&](int l2) { return penalized(res.k1_hat, l2); });
  return res;
}

SelectionResult select_ic(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config, bool full_grid) {
  return select_ic(panel, tau, K1, K2, config, overfit_sigmas(panel, tau, K1, K2, config),
                   full_grid);
}

MatrixPanel vectorize_panel(const MatrixPanel& panel) {
  const Eigen::Index p = static_cast<Eigen::Index>(panel.p1()) * panel.p2();
  std::vector<Eigen::MatrixXd> values;
  std::vector<Mask> masks;
  values.reserve(static_cast<std::size_t>(panel.T()));
  masks.reserve(static_cast<std::size_t>(panel.T()));
  for (int t = 0; t < panel.T(); ++t) {
    values.push_back(panel.slice(t).reshaped(p, 1));
    masks.push_back(panel.mask(t).reshaped(p, 1));
  }
  return MatrixPanel(std::move(values), std::move(masks));
}

int vec_select_rm(const MatrixPanel& panel, QuantileLevel tau, int k_max, const FitConfig& config) {
  if (k_max < 1) throw InvalidArgument("k_max must be positive");
  const MatrixPanel vec = vectorize_panel(panel);
  const int K = std::min(k_max, vec.p1());
  const OverfitSigmas over = overfit_sigmas(vec, tau, K, 1, config);
  const double L = rate_L(vec.p1(), vec.p2(), vec.T()).value;
  const double threshold = over.sigma1[0] * std::pow(L, -2.0 / 3.0);
  return std::clamp(count_above(over.sigma1, threshold), 1, K);
}

}  // namespace mqf
