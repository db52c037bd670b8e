#pragma once

#include <vector>

namespace mqf {

/// Order-m smoothing kernel k(z) on [-1, 1] and its survival integral
/// K(z) = 1 - int_{-1}^{z} k(s) ds, with bandwidth h.
///
/// k is stored in the power basis: k(z) = sum_n poly_coeffs[n] z^n on [-1, 1],
/// zero outside.
struct KernelSpec {
  int order_m = 2;
  std::vector<double> poly_coeffs;
  double h = 1.0;

  double k(double z) const noexcept;
  double dk(double z) const noexcept;
  double K(double z) const noexcept;

  // Per-residual smoothed loss (tau - K(u/h)) u and its first two derivatives in u.
  double loss(double u, double tau) const noexcept;
  double dloss(double u, double tau) const noexcept;
  double d2loss(double u, double tau) const noexcept;

  void validate() const;
};

/// k(z) = (1 - z^2)^3 q(z) with q the minimal-degree even polynomial meeting
/// the moment conditions up to order m - 1. Coefficients come from an exact
/// rational solve of the moment system.
KernelSpec build_kernel(int order_m, double h);

/// h = scale * T^{-2c}, requiring 1/m < c < 1/6.
double default_bandwidth(int T, int order_m, double c_exponent, double scale = 1.0);

/// int_{-1}^{1} z^s k(z) dz evaluated from the stored coefficients.
double kernel_moment(const KernelSpec& kernel, int s);

}  // namespace mqf
