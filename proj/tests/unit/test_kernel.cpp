#include <doctest.h>

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>

#include "mqf/core.hpp"
#include "mqf/kernel.hpp"

using namespace mqf;

namespace {

// Independent quadrature of z^s k(z) over [-1, 1]; k is a polynomial of
// degree m + 4 there, so a 30-point rule is exact to rounding.
double quad_moment(const KernelSpec& k, int s) {
  return boost::math::quadrature::gauss<double, 30>::integrate(
      [&](double z) { return std::pow(z, s) * k.k(z); }, -1.0, 1.0);
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("second-order kernel is 35/32 (1 - z^2)^3") {
    const KernelSpec k = build_kernel(2, 1.0);
    for (double z : {-0.9, -0.3, 0.0, 0.4, 0.77}) {
      const double w = 1.0 - z * z;
      CHECK(k.k(z) == doctest::Approx(35.0 / 32.0 * w * w * w).epsilon(1e-14));
    }
  }

  TEST_CASE("moment conditions hold for orders 2, 4 and 8") {
    for (int m : {2, 4, 8}) {
      CAPTURE(m);
      const KernelSpec k = build_kernel(m, 1.0);
      CHECK(std::abs(quad_moment(k, 0) - 1.0) < 1e-10);
      for (int s = 1; s < m; ++s) {
        CAPTURE(s);
        CHECK(std::abs(quad_moment(k, s)) < 1e-10);
        CHECK(std::abs(kernel_moment(k, s)) < 1e-10);
      }
      CHECK(std::abs(quad_moment(k, m)) > 1e-6);
      CHECK(kernel_moment(k, m) == doctest::Approx(quad_moment(k, m)).epsilon(1e-10));
    }
  }

  TEST_CASE("kernel and derivative vanish at the support boundary") {
    for (int m : {2, 4, 8}) {
      const KernelSpec k = build_kernel(m, 1.0);
      for (double z : {-1.0, 1.0}) {
        CHECK(std::abs(k.k(z)) < 1e-12);
        CHECK(std::abs(k.dk(z)) < 1e-12);
      }
      CHECK(k.k(1.5) == 0.0);
      CHECK(k.k(-2.0) == 0.0);
    }
  }

  TEST_CASE("survival integral") {
    const KernelSpec k = build_kernel(4, 1.0);
    CHECK(k.K(-1.0) == doctest::Approx(1.0));
    CHECK(k.K(-3.0) == 1.0);
    CHECK(k.K(1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(k.K(4.0) == 0.0);
    CHECK(k.K(0.0) == doctest::Approx(0.5));
    const double z = 0.35;
    const double tail = boost::math::quadrature::gauss<double, 30>::integrate(
        [&](double s) { return k.k(s); }, z, 1.0);
    CHECK(k.K(z) == doctest::Approx(tail).epsilon(1e-12));
  }

  TEST_CASE("smoothed loss derivatives match finite differences") {
    const KernelSpec k = build_kernel(8, 0.7);
    const double tau = 0.3, e = 1e-6;
    for (double u : {-0.9, -0.2, 0.1, 0.5, 1.3}) {
      CHECK(k.dloss(u, tau) == doctest::Approx((k.loss(u + e, tau) - k.loss(u - e, tau)) / (2 * e)).epsilon(1e-6));
      CHECK(k.d2loss(u, tau) ==
            doctest::Approx((k.dloss(u + e, tau) - k.dloss(u - e, tau)) / (2 * e)).epsilon(1e-5));
    }
  }

  TEST_CASE("default bandwidth") {
    CHECK(default_bandwidth(100, 8, 0.15) == doctest::Approx(std::pow(100.0, -0.3)));
    CHECK(default_bandwidth(100, 8, 0.15) == doctest::Approx(0.2512).epsilon(1e-3));
    CHECK_THROWS_AS(default_bandwidth(100, 8, 0.125), InvalidArgument);
    CHECK_THROWS_AS(default_bandwidth(100, 8, 0.2), InvalidArgument);
    CHECK_THROWS_AS(default_bandwidth(100, 6, 0.15), InvalidArgument);
  }

  TEST_CASE("invalid kernel requests") {
    CHECK_THROWS_AS(build_kernel(3, 1.0), InvalidArgument);
    CHECK_THROWS_AS(build_kernel(0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(build_kernel(2, 0.0), InvalidArgument);
  }
}
