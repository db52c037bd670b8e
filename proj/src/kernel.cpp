#include "mqf/kernel.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <sstream>

#include "mqf/core.hpp"

namespace mqf {

namespace {

using Rational = boost::multiprecision::cpp_rational;

double horner(const std::vector<double>& c, double z) noexcept {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

// int_{-1}^{1} z^{2n} (1 - z^2)^3 dz
Rational weighted_even_moment(int n) {
  const int a = 2 * n;
  return Rational(2) * (Rational(1, a + 1) - Rational(3, a + 3) + Rational(3, a + 5) -
                        Rational(1, a + 7));
}

}  // namespace

double KernelSpec::k(double z) const noexcept {
  if (z <= -1.0 || z >= 1.0) return 0.0;
  return horner(poly_coeffs, z);
}

double KernelSpec::dk(double z) const noexcept {
  if (z <= -1.0 || z >= 1.0) return 0.0;
  double acc = 0.0;
  for (std::size_t n = poly_coeffs.size(); n-- > 1;) acc = acc * z + n * poly_coeffs[n];
  return acc;
}

double KernelSpec::K(double z) const noexcept {
  if (z <= -1.0) return 1.0;
  if (z >= 1.0) return 0.0;
  // Antiderivative evaluated at z and -1.
  double at_z = 0.0;
  double at_minus_one = 0.0;
  for (std::size_t n = poly_coeffs.size(); n-- > 0;) {
    const double c = poly_coeffs[n] / static_cast<double>(n + 1);
    at_z = at_z * z + c;
    at_minus_one = at_minus_one * -1.0 + c;
  }
  at_z *= z;
  at_minus_one *= -1.0;
  return 1.0 - (at_z - at_minus_one);
}

double KernelSpec::loss(double u, double tau) const noexcept { return (tau - K(u / h)) * u; }

double KernelSpec::dloss(double u, double tau) const noexcept {
  const double z = u / h;
  return tau - K(z) + z * k(z);
}

double KernelSpec::d2loss(double u, double /*tau*/) const noexcept {
  const double z = u / h;
  return (2.0 * k(z) + z * dk(z)) / h;
}

void KernelSpec::validate() const {
  if (order_m < 2 || order_m % 2 != 0)
    throw InvalidArgument("kernel order must be an even integer >= 2");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("kernel bandwidth must be positive");
  if (poly_coeffs.empty()) throw InvalidArgument("kernel has no coefficients");
}

KernelSpec build_kernel(int order_m, double h) {
  if (order_m < 2 || order_m % 2 != 0)
    throw InvalidArgument("kernel order must be an even integer >= 2");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("kernel bandwidth must be positive");

  // Unknowns: coefficients of z^0, z^2, ..., z^{m-2} in q. Equations: even
  // moments 0, 2, ..., m-2 of (1-z^2)^3 q(z) equal (1, 0, ..., 0).
  const int n = order_m / 2;
  std::vector<std::vector<Rational>> a(n, std::vector<Rational>(n + 1));
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) a[row][col] = weighted_even_moment(row + col);
    a[row][n] = row == 0 ? Rational(1) : Rational(0);
  }
  // Gauss-Jordan in exact arithmetic; the Gram matrix is positive definite.
  for (int piv = 0; piv < n; ++piv) {
    int best = piv;
    while (best < n && a[best][piv] == 0) ++best;
    if (best == n) throw Degenerate("singular kernel moment system");
    std::swap(a[piv], a[best]);
    const Rational inv = Rational(1) / a[piv][piv];
    for (int col = piv; col <= n; ++col) a[piv][col] *= inv;
    for (int row = 0; row < n; ++row) {
      if (row == piv || a[row][piv] == 0) continue;
      const Rational factor = a[row][piv];
      for (int col = piv; col <= n; ++col) a[row][col] -= factor * a[piv][col];
    }
  }

  // Expand (1 - 3z^2 + 3z^4 - z^6) * q(z).
  const Rational weight[4] = {1, -3, 3, -1};
  std::vector<Rational> full(2 * (n - 1) + 7, Rational(0));
  for (int i = 0; i < n; ++i)
    for (int w = 0; w < 4; ++w) full[2 * i + 2 * w] += weight[w] * a[i][n];

  KernelSpec spec;
  spec.order_m = order_m;
  spec.h = h;
  spec.poly_coeffs.reserve(full.size());
  for (const auto& c : full) spec.poly_coeffs.push_back(static_cast<double>(c));
  return spec;
}

double default_bandwidth(int T, int order_m, double c_exponent, double scale) {
  if (T < 1) throw InvalidArgument("bandwidth requires T >= 1");
  if (order_m < 2 || order_m % 2 != 0)
    throw InvalidArgument("kernel order must be an even integer >= 2");
  const double lower = 1.0 / order_m;
  const double upper = 1.0 / 6.0;
  if (!(c_exponent > lower && c_exponent < upper)) {
    std::ostringstream os;
    os << "bandwidth exponent " << c_exponent << " outside admissible open interval (" << lower
       << ", " << upper << ")";
    throw InvalidArgument(os.str());
  }
  if (!(scale > 0.0)) throw InvalidArgument("bandwidth scale must be positive");
  return scale * std::pow(static_cast<double>(T), -2.0 * c_exponent);
}

double kernel_moment(const KernelSpec& kernel, int s) {
  double acc = 0.0;
  for (std::size_t n = 0; n < kernel.poly_coeffs.size(); ++n) {
    const std::size_t e = n + static_cast<std::size_t>(s);
    if (e % 2 == 0) acc += kernel.poly_coeffs[n] * 2.0 / static_cast<double>(e + 1);
  }
  return acc;
}

}  // namespace mqf
