#include <doctest.h>

#include <cmath>

#include "../helpers.hpp"
#include "mqf/selection.hpp"
#include "mqf/simulate.hpp"

using namespace mqf;

namespace {

MatrixPanel noiseless_panel(std::uint64_t seed, int T = 20, int p = 20) {
  DgpConfig d;
  d.T = T;
  d.p1 = p;
  d.p2 = p;
  d.theta_star = 0.0;
  d.seed = seed;
  return gen_panel(d, QuantileLevel(0.5)).first;
}

FitConfig base_config() {
  FitConfig c;
  c.obj_rel_tol = 1e-4;
  c.n_restarts = 1;
  return c;
}

}  // namespace

TEST_SUITE("selection") {
  TEST_CASE("decision rules on fixed sigmas") {
    Eigen::VectorXd s1(6), s2(6);
    s1 << 4.0, 2.0, 1e-4, 1e-5, 1e-6, 0.0;
    s2 << 5.0, 3.0, 1.0, 1e-4, 1e-5, 0.0;
    const double L = 50.0;
    CHECK(rm_threshold(s1, s2, L) == doctest::Approx(4.5 * std::pow(50.0, -2.0 / 3.0)));
    CHECK(ic_threshold(s1, s2, L) == doctest::Approx(4.5 / 50.0));
    CHECK(count_above(s1, rm_threshold(s1, s2, L)) == 2);
    CHECK(count_above(s2, rm_threshold(s1, s2, L)) == 3);
    CHECK(eigen_ratio_argmax(s1, 1e-4, L) == 2);
    CHECK(eigen_ratio_argmax(s2, 1e-4, L) == 3);
  }

  TEST_CASE("eigen ratio ties go to the smallest index") {
    Eigen::VectorXd s(4);
    s << 8.0, 4.0, 2.0, 1.0;
    CHECK(eigen_ratio_argmax(s, 1e-4, 1e6) == 1);
    CHECK_THROWS_AS(eigen_ratio_argmax(Eigen::VectorXd::Ones(1), 1e-4, 10.0), InvalidArgument);
  }

  TEST_CASE("noiseless panels select (2, 3) by RM and ER") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(seed);
      const MatrixPanel panel = noiseless_panel(seed);
      FitConfig cfg = base_config();
      cfg.seed = seed;
      const OverfitSigmas over = overfit_sigmas(panel, QuantileLevel(0.5), 6, 6, cfg);
      const double L = rate_L(20, 20, 20).value;
      CHECK((over.sigma1.tail(4).array() < 1e-6).all());
      CHECK((over.sigma2.tail(3).array() < 1e-6).all());
      const SelectionResult rm = select_rm(over, L);
      const SelectionResult er = select_er(over, 1e-4, L);
      CHECK(rm.k1_hat == 2);
      CHECK(rm.k2_hat == 3);
      CHECK(er.k1_hat == 2);
      CHECK(er.k2_hat == 3);
    }
  }

  // The IC penalty delta / L is in check-loss units, so a weak but exact factor
  // can cost less than the penalty on small panels; 30^3 clears it.
  TEST_CASE("noiseless panels select (2, 3) by IC") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(seed);
      const MatrixPanel panel = noiseless_panel(seed, 30, 30);
      FitConfig cfg = base_config();
      cfg.seed = seed;
      const SelectionResult ic = select_ic(panel, QuantileLevel(0.5), 6, 6, cfg);
      CHECK(ic.k1_hat == 2);
      CHECK(ic.k2_hat == 3);
    }
  }

  TEST_CASE("vectorized RM counts k1 k2") {
    // Orthogonal loadings and i.i.d. factors keep the six vectorized sigmas
    // comparable, so none falls under the relative RM threshold.
    std::mt19937_64 rng(3);
    const int p = 8, T = 200;
    auto ortho = [&](int k) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::randn(p, p, rng));
      return Eigen::MatrixXd(std::sqrt(double(p)) * (qr.householderQ() * Eigen::MatrixXd::Identity(p, k)));
    };
    FactorParams theta{ortho(2), ortho(3), {}};
    for (int t = 0; t < T; ++t) theta.F.push_back(testing::randn(2, 3, rng));
    const MatrixPanel panel(common_component(theta));
    const MatrixPanel v = vectorize_panel(panel);
    CHECK(v.p1() == 64);
    CHECK(v.p2() == 1);
    CHECK(v.slice(5)(9, 0) == panel.slice(5)(1, 1));
    FitConfig cfg = base_config();
    CHECK(vec_select_rm(panel, QuantileLevel(0.5), 10, cfg) == 6);
    CHECK(vec_select_rm(panel, QuantileLevel(0.5), 4, cfg) <= 4);
  }

  TEST_CASE("argument validation") {
    const MatrixPanel panel = noiseless_panel(1, 5, 5);
    FitConfig cfg = base_config();
    CHECK_THROWS_AS(select_rm(panel, QuantileLevel(0.5), 0, 3, cfg), InvalidArgument);
    CHECK_THROWS_AS(select_er(panel, QuantileLevel(0.5), 1, 3, 1e-4, cfg), InvalidArgument);
    CHECK_THROWS_AS(select_er(panel, QuantileLevel(0.5), 3, 3, 0.0, cfg), InvalidArgument);
    CHECK_THROWS_AS(select_rm(panel, QuantileLevel(0.5), 6, 3, cfg), InvalidArgument);
  }
}
