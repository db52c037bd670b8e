#pragma once

// Alternating check-loss estimation of (R, {F_t}, C), the identification
// normalization, smoothed estimation and the quantities needed to
// standardize smoothed loadings.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mqf/core.hpp"
#include "mqf/kernel.hpp"

namespace mqf {

struct FitConfig {
  int k1 = 1;
  int k2 = 1;
  int max_outer_iters = 100;
  double obj_rel_tol = 1e-6;
  double param_tol = 1e-5;  // on theta_distance between sweeps
  std::uint64_t seed = 0;
  int n_restarts = 1;
  int threads = 0;  // 0: MQF_THREADS or 1
  double solver_tol = 1e-10;
  double smooth_tol = 1e-9;

  void validate(int p1, int p2) const;
};

struct AsymptoticStats {
  std::vector<Eigen::MatrixXd> phi;  // one k1 x k1 matrix per row i
  Eigen::VectorXd sigma1;
  Eigen::VectorXd sigma2;
  double density_at_zero = 0.0;
  double density_bandwidth = 0.0;

  /// tau (1 - tau) Phi_i^{-1} Sigma_1 Phi_i^{-1}: asymptotic covariance of
  /// sqrt(T p2) (r_i - r_0i).
  Eigen::MatrixXd row_covariance(int i, double tau) const;
};

struct NormalizeReport {
  FactorParams params;
  bool tied_spectrum = false;  // adjacent eigenvalues within kIdentTol
};

/// i.i.d. N(0,1) entries from a seeded generator, then normalized.
FactorParams init_random(int p1, int p2, int T, int k1, int k2, std::uint64_t seed);

/// Rotate theta so that R'R/p1 = I, C'C/p2 = I, the averaged factor second
/// moments are diagonal and descending, and the first entry of each loading
/// column above kSignTol is positive. The common component is unchanged.
/// Throws Degenerate when R or C is rank deficient.
FactorParams normalize(const FactorParams& theta);
NormalizeReport normalize_report(const FactorParams& theta, bool require_full_rank = true);

/// Descending diagonals of sum_t F_t F_t'/T and sum_t F_t'F_t/T.
std::pair<Eigen::VectorXd, Eigen::VectorXd> factor_sigmas(const FactorParams& theta);

FitResult fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config);

/// Same sweep structure with smoothed subproblems. Starts from the converged
/// unsmoothed fit unless a start is given.
FitResult smoothed_fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config,
                       const KernelSpec& kernel);
FitResult smoothed_fit(const MatrixPanel& panel, QuantileLevel tau, const FitConfig& config,
                       const KernelSpec& kernel, const FactorParams& start);

/// Gaussian kernel density of pooled residuals at 0 after recentring at their
/// tau-quantile. bandwidth <= 0 selects Silverman's rule.
double residual_density_at_zero(const MatrixPanel& panel, const FactorParams& theta,
                                QuantileLevel tau, double bandwidth, double* used_bandwidth = nullptr);

AsymptoticStats asymptotic_stats(const MatrixPanel& panel, const FitResult& fit, QuantileLevel tau,
                                 double density_bandwidth = 0.0);

/// Masked entries replaced by the fitted common component; mask all-true.
MatrixPanel impute(const MatrixPanel& panel, const FitResult& fit);

}  // namespace mqf
