#pragma once

// Factor-number selection: rank minimization (RM), information criterion
// (IC), eigenvalue ratio (ER), and RM on the vectorized panel.

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <utility>

#include "mqf/core.hpp"
#include "mqf/estimator.hpp"

namespace mqf {

enum class SelectionMethod { RM, IC, ER };

struct SelectionConfig {
  int K1 = 6;
  int K2 = 6;
  double c0 = 1e-4;
  bool ic_full_grid = false;
  int k_max = 12;  // vectorized RM
};

struct SelectionResult {
  int k1_hat = 0;
  int k2_hat = 0;
  Eigen::VectorXd sigma1_full;
  Eigen::VectorXd sigma2_full;
  SelectionMethod method = SelectionMethod::ER;
  double threshold_used = 0.0;  // C for RM/IC, c0 for ER
  std::map<std::pair<int, int>, double> ic_surface;
};

struct OverfitSigmas {
  Eigen::VectorXd sigma1;
  Eigen::VectorXd sigma2;
  FitResult fit;
};

/// Fit with (K1, K2) factors and read the descending factor second-moment
/// diagonals.
OverfitSigmas overfit_sigmas(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                             const FitConfig& config);

// Decision rules on precomputed sigmas.
double rm_threshold(const Eigen::VectorXd& sigma1, const Eigen::VectorXd& sigma2, double L);
double ic_threshold(const Eigen::VectorXd& sigma1, const Eigen::VectorXd& sigma2, double L);
int count_above(const Eigen::VectorXd& sigma, double threshold);
/// argmax_{1<=k<=K-1} sigma_k / (sigma_{k+1} + c0 L^{-2}); ties to smallest k.
int eigen_ratio_argmax(const Eigen::VectorXd& sigma, double c0, double L);

SelectionResult select_rm(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config);
SelectionResult select_rm(const OverfitSigmas& overfit, double L);

SelectionResult select_ic(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config, bool full_grid = false);
/// Reuses an existing (K1, K2) overfit for delta and the (K1, K2) cell.
SelectionResult select_ic(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2,
                          const FitConfig& config, const OverfitSigmas& overfit,
                          bool full_grid = false);

SelectionResult select_er(const MatrixPanel& panel, QuantileLevel tau, int K1, int K2, double c0,
                          const FitConfig& config);
SelectionResult select_er(const OverfitSigmas& overfit, double c0, double L);

/// Each X_t reshaped to a (p1 p2) x 1 matrix; RM with K1 = k_max, k2 = 1.
/// Returns the estimate of k1 * k2.
int vec_select_rm(const MatrixPanel& panel, QuantileLevel tau, int k_max, const FitConfig& config);

MatrixPanel vectorize_panel(const MatrixPanel& panel);

}  // namespace mqf
