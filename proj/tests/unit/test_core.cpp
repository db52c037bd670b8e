#include <doctest.h>

#include <cmath>
#include <random>

#include "../helpers.hpp"
#include "mqf/core.hpp"
#include "mqf/estimator.hpp"
#include "mqf/kernel.hpp"

using namespace mqf;

TEST_SUITE("core") {
  TEST_CASE("check loss examples") {
    CHECK(check_loss(0.0, QuantileLevel(0.3)) == 0.0);
    CHECK(check_loss(-2.0, QuantileLevel(0.25)) == doctest::Approx(1.5));
    CHECK(check_loss(3.0, QuantileLevel(0.5)) == doctest::Approx(1.5));
  }

  TEST_CASE("quantile level rejects the boundary") {
    CHECK_THROWS_AS(QuantileLevel(0.0), InvalidArgument);
    CHECK_THROWS_AS(QuantileLevel(1.0), InvalidArgument);
    CHECK_THROWS_AS(QuantileLevel(std::nan("")), InvalidArgument);
  }

  TEST_CASE("objective of the truth on a noiseless panel is zero") {
    const FactorParams p = testing::random_params(6, 5, 4, 2, 2, 1);
    CHECK(objective(testing::panel_of(p), p, QuantileLevel(0.5)) == doctest::Approx(0.0).epsilon(1e-14));
  }

  TEST_CASE("objective matches brute-force summation") {
    std::mt19937_64 rng(7);
    std::vector<Eigen::MatrixXd> x{testing::randn(2, 2, rng), testing::randn(2, 2, rng)};
    FactorParams zero;
    zero.R = Eigen::MatrixXd::Zero(2, 1);
    zero.C = Eigen::MatrixXd::Zero(2, 1);
    zero.F = {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)};
    for (double tau : {0.2, 0.5, 0.9}) {
      double brute = 0.0;
      for (const auto& s : x)
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            const double u = s(i, j);
            brute += (tau - (u <= 0.0 ? 1.0 : 0.0)) * u;
          }
      CHECK(objective(MatrixPanel(x), zero, QuantileLevel(tau)) == doctest::Approx(brute / 8.0));
    }
  }

  TEST_CASE("objective with a single observed entry") {
    std::vector<Eigen::MatrixXd> x(2, Eigen::MatrixXd::Constant(3, 2, 5.0));
    std::vector<Mask> m(2, Mask::Constant(3, 2, false));
    m[1](2, 0) = true;
    x[1](2, 0) = -1.5;
    FactorParams zero;
    zero.R = Eigen::MatrixXd::Zero(3, 1);
    zero.C = Eigen::MatrixXd::Zero(2, 1);
    zero.F = {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)};
    const QuantileLevel tau(0.3);
    CHECK(objective(MatrixPanel(x, m), zero, tau) == doctest::Approx(check_loss(-1.5, tau) / 12.0));
  }

  TEST_CASE("masked entries do not affect the objective") {
    const FactorParams p = testing::random_params(5, 4, 3, 1, 2, 3);
    std::vector<Eigen::MatrixXd> x = common_component(p);
    std::vector<Mask> m(3, Mask::Constant(5, 4, true));
    m[0](1, 1) = false;
    m[2](4, 3) = false;
    FactorParams theta = testing::random_params(5, 4, 3, 1, 2, 4);
    const double before = objective(MatrixPanel(x, m), theta, QuantileLevel(0.4));
    x[0](1, 1) += 1e3;
    x[2](4, 3) -= 1e3;
    CHECK(objective(MatrixPanel(x, m), theta, QuantileLevel(0.4)) == before);
  }

  TEST_CASE("smoothed objective tails and small-bandwidth limit") {
    const KernelSpec k = build_kernel(2, 0.5);
    const double tau = 0.3;
    CHECK(k.loss(2.0, tau) == doctest::Approx(tau * 2.0));
    CHECK(k.loss(-2.0, tau) == doctest::Approx((tau - 1.0) * -2.0));
    const FactorParams p = testing::random_params(4, 3, 3, 1, 1, 5);
    std::mt19937_64 rng(11);
    std::vector<Eigen::MatrixXd> x = common_component(p);
    for (auto& s : x) s += testing::randn(4, 3, rng);
    const MatrixPanel panel(x);
    const double exact = objective(panel, p, QuantileLevel(tau));
    double prev = 1e300;
    for (double h : {1e-1, 1e-3, 1e-6}) {
      const double gap = std::abs(smoothed_objective(panel, p, QuantileLevel(tau), build_kernel(2, h)) - exact);
      CHECK(gap <= prev);
      prev = gap;
    }
    CHECK(prev < 1e-9);
  }

  TEST_CASE("theta distance") {
    const FactorParams a = testing::random_params(6, 5, 4, 2, 3, 21);
    CHECK(theta_distance(a, a) == 0.0);

    std::mt19937_64 rng(3);
    const Eigen::MatrixXd OR = testing::random_orthonormal(2, rng);
    const Eigen::MatrixXd OC = testing::random_orthonormal(3, rng);
    FactorParams b{a.R * OR, a.C * OC, {}};
    for (const auto& f : a.F) b.F.push_back(OR.transpose() * f * OC);
    CHECK(theta_distance(a, b) < 1e-12);

    FactorParams c{Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 1), {Eigen::MatrixXd::Zero(1, 1)}};
    FactorParams d{Eigen::MatrixXd(2, 1), Eigen::MatrixXd(2, 1), {Eigen::MatrixXd::Constant(1, 1, 2.0)}};
    d.R << 1.0, -1.0;
    d.C << 0.5, 3.0;
    // Entries of 2 r c': 1, 6, -1, -6.
    CHECK(theta_distance(c, d) == doctest::Approx(std::sqrt((1.0 + 36.0 + 1.0 + 36.0) / 4.0)));
    CHECK(theta_distance(a, b) == doctest::Approx(theta_distance(b, a)));
  }

  TEST_CASE("loading distance and space similarity") {
    std::mt19937_64 rng(5);
    const int p = 12, k = 3;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::randn(p, p, rng));
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    const Eigen::MatrixXd A = std::sqrt(double(p)) * Q.leftCols(k);
    const Eigen::MatrixXd B = std::sqrt(double(p)) * Q.middleCols(k, k);
    CHECK(loading_distance(A, A) < 1e-7);
    CHECK(loading_distance(A, B) == doctest::Approx(1.0));
    CHECK(loading_distance(A, A * testing::random_orthonormal(k, rng)) < 1e-7);
    CHECK(space_similarity(A, A) == doctest::Approx(1.0));
    CHECK(space_similarity(A, B) == doctest::Approx(0.0).epsilon(1e-12));

    Eigen::HouseholderQR<Eigen::MatrixXd> qr2(testing::randn(p, k, rng));
    const Eigen::MatrixXd C = std::sqrt(double(p)) * (qr2.householderQ() * Eigen::MatrixXd::Identity(p, k));
    const double d = loading_distance(A, C);
    CHECK(space_similarity(A, C) == doctest::Approx(1.0 - d * d));
  }

  TEST_CASE("common component") {
    FactorParams z = testing::random_params(3, 4, 2, 2, 2, 8);
    for (auto& f : z.F) f.setZero();
    for (const auto& s : common_component(z)) CHECK(s.isZero());

    FactorParams one{Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(2, 1),
                     {Eigen::MatrixXd::Constant(1, 1, 1.5), Eigen::MatrixXd::Constant(1, 1, -2.0)}};
    const auto cc = common_component(one);
    CHECK(cc[0].isApprox(Eigen::MatrixXd::Constant(3, 2, 1.5)));
    CHECK(cc[1].isApprox(Eigen::MatrixXd::Constant(3, 2, -2.0)));

    FactorParams h{Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2), {Eigen::MatrixXd(2, 2)}};
    h.R << 1, 2, 3, 4;
    h.F[0] << 1, 0, 1, 1;
    h.C << 2, 0, 1, 1;
    // R F = [3 2; 7 4]; times C' = [3*2+2*0, 3*1+2*1; 7*2+4*0, 7*1+4*1].
    Eigen::MatrixXd expect(2, 2);
    expect << 6, 5, 14, 11;
    CHECK(common_component(h)[0].isApprox(expect));
  }

  TEST_CASE("rate L") {
    CHECK(rate_L(4, 4, 4).value == doctest::Approx(4.0));
    CHECK(rate_L(100, 100, 1).value == doctest::Approx(10.0));
    CHECK(rate_L(20, 50, 80).value == doctest::Approx(std::sqrt(20.0 * 50.0)));
  }

  TEST_CASE("panel validation") {
    CHECK_THROWS_AS(MatrixPanel{std::vector<Eigen::MatrixXd>{}}, InvalidArgument);
    std::vector<Eigen::MatrixXd> ragged{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 2)};
    CHECK_THROWS_AS(MatrixPanel{ragged}, DimensionMismatch);
    std::vector<Eigen::MatrixXd> bad{Eigen::MatrixXd::Zero(2, 2)};
    bad[0](0, 0) = std::nan("");
    CHECK_THROWS(MatrixPanel{bad});
    std::vector<Mask> m{Mask::Constant(2, 2, true)};
    m[0](0, 0) = false;
    CHECK_NOTHROW(MatrixPanel(bad, m));
  }

  TEST_CASE("kronecker product") {
    Eigen::MatrixXd a(2, 1), b(1, 2);
    a << 1, 2;
    b << 3, 4;
    Eigen::MatrixXd e(2, 2);
    e << 3, 4, 6, 8;
    CHECK(kronecker(a, b).isApprox(e));
  }
}
