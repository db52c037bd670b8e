#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <random>

#include "../helpers.hpp"
#include "mqf/simulate.hpp"

using namespace mqf;

TEST_SUITE("simulate") {
  TEST_CASE("noise laws parse and name") {
    CHECK(NoiseLaw::parse("normal").kind == NoiseLaw::Kind::Normal);
    CHECK(NoiseLaw::parse("t3").df == 3.0);
    CHECK(NoiseLaw::parse("t1").name() == "t1");
    CHECK_THROWS_AS(NoiseLaw::parse("cauchy"), InvalidArgument);
    CHECK_THROWS_AS(NoiseLaw::parse("t"), InvalidArgument);
    CHECK_THROWS_AS(NoiseLaw::parse("t-2"), InvalidArgument);
  }

  TEST_CASE("noise quantiles") {
    const boost::math::normal_distribution<double> n;
    CHECK(noise_quantile(NoiseLaw::normal(), 0.5, false) == 0.0);
    CHECK(noise_quantile(NoiseLaw::normal(), 0.35, false) == doctest::Approx(boost::math::quantile(n, 0.35)));
    CHECK(noise_quantile(NoiseLaw::student_t(1), 0.75, false) == doctest::Approx(1.0));
    CHECK(noise_quantile(NoiseLaw::student_t(3), 0.2, false) ==
          doctest::Approx(boost::math::quantile(boost::math::students_t_distribution<double>(3), 0.2)));
    CHECK(noise_quantile(NoiseLaw::normal(), 0.35, true) ==
          doctest::Approx(std::sqrt(1.12) * boost::math::quantile(n, 0.35)));
    CHECK(noise_quantile(NoiseLaw::student_t(3), 0.5, true) == 0.0);
  }

  TEST_CASE("dependent t quantile agrees with simulation") {
    const double q = noise_quantile(NoiseLaw::student_t(3), 0.35, true);
    std::mt19937_64 rng(1);
    std::student_t_distribution<double> st(3.0);
    const int n = 400000;
    int below = 0;
    for (int k = 0; k < n; ++k) {
      const double v = st(rng) + 0.2 * (st(rng) + st(rng) + st(rng));
      below += v <= q;
    }
    // Binomial sd at n = 4e5 is about 7.5e-4.
    CHECK(std::abs(double(below) / n - 0.35) < 4e-3);
  }

  TEST_CASE("effective ranks") {
    DgpConfig d;
    d.T = 10;
    d.p1 = 8;
    d.p2 = 8;
    const auto [p5, t5] = gen_panel(d, QuantileLevel(0.5));
    CHECK(t5.effective_k1 == 2);
    CHECK(t5.effective_k2 == 3);
    const auto [p35, t35] = gen_panel(d, QuantileLevel(0.35));
    CHECK(t35.effective_k1 == 3);
    CHECK(t35.effective_k2 == 4);
    CHECK(t35.params.k1() == 3);
    CHECK(t35.params.k2() == 4);
    CHECK(testing::max_abs_diff(p5.values(), p35.values()) == 0.0);
    d.theta_star = 0.0;
    CHECK(gen_panel(d, QuantileLevel(0.35)).second.effective_k1 == 2);
  }

  TEST_CASE("noiseless panel equals the truth's common component") {
    DgpConfig d;
    d.T = 6;
    d.p1 = 7;
    d.p2 = 5;
    d.theta_star = 0.0;
    const auto [panel, truth] = gen_panel(d, QuantileLevel(0.5));
    CHECK(testing::max_abs_diff(panel.values(), common_component(truth.params)) < 1e-12);
  }

  TEST_CASE("augmented truth is the conditional quantile") {
    DgpConfig d;
    d.T = 4;
    d.p1 = 6;
    d.p2 = 5;
    d.theta_star = 0.0;
    d.seed = 9;
    const auto [x0, t0] = gen_panel(d, QuantileLevel(0.5));
    d.theta_star = 3.0;
    const auto [x, t] = gen_panel(d, QuantileLevel(0.35));
    // The quantile common component minus the mean component is theta* |g_t| q_tau
    // in every cell of slice t.
    const auto cq = common_component(t.params);
    const auto c0 = common_component(t0.params);
    for (int s = 0; s < d.T; ++s) {
      const Eigen::MatrixXd diff = cq[s] - c0[s];
      CHECK((diff.array() - diff(0, 0)).abs().maxCoeff() < 1e-10);
      CHECK(diff(0, 0) * t.q_tau >= 0.0);
    }
  }

  TEST_CASE("generation is deterministic under seed") {
    DgpConfig d;
    d.T = 5;
    d.p1 = 4;
    d.p2 = 4;
    d.seed = 11;
    const auto a = gen_panel(d, QuantileLevel(0.5)).first;
    const auto b = gen_panel(d, QuantileLevel(0.5)).first;
    d.seed = 12;
    const auto c = gen_panel(d, QuantileLevel(0.5)).first;
    CHECK(testing::max_abs_diff(a.values(), b.values()) == 0.0);
    CHECK(testing::max_abs_diff(a.values(), c.values()) > 0.0);
  }

  TEST_CASE("dependent error variance in interior cells") {
    DgpConfig d;
    d.T = 60;
    d.p1 = 60;
    d.p2 = 60;
    d.theta_star = 1.0;
    d.unit_scale = true;
    d.dependent_errors = true;
    d.seed = 4;
    const auto [panel, truth] = gen_panel(d, QuantileLevel(0.5));
    const auto cc = common_component(truth.params);
    double sq = 0.0;
    int n = 0;
    for (int t = 1; t < d.T; ++t)
      for (int j = 1; j < d.p2; ++j)
        for (int i = 1; i < d.p1; ++i) {
          const double e = panel.slice(t)(i, j) - cc[t](i, j);
          sq += e * e;
          ++n;
        }
    CHECK(sq / n == doctest::Approx(1.12).epsilon(0.02));
  }

  TEST_CASE("dgp validation") {
    DgpConfig d;
    d.k1 = 0;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    d = DgpConfig{};
    d.ar_coef = 1.0;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    d = DgpConfig{};
    d.theta_star = -1.0;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
  }

  TEST_CASE("corruption") {
    DgpConfig d;
    d.T = 5;
    d.p1 = 6;
    d.p2 = 7;
    const MatrixPanel p = gen_panel(d, QuantileLevel(0.5)).first;
    CHECK(testing::max_abs_diff(corrupt(p, 0.0, 50.0, 1).values(), p.values()) == 0.0);
    const MatrixPanel all = corrupt(p, 1.0, 50.0, 1);
    for (const auto& s : all.values()) CHECK((s.array().abs() == 50.0).all());
    const MatrixPanel some = corrupt(p, 0.1, 50.0, 2);
    int changed = 0;
    for (int t = 0; t < 5; ++t) changed += static_cast<int>((some.slice(t).array() != p.slice(t).array()).count());
    CHECK(changed == 21);
    CHECK(testing::max_abs_diff(corrupt(p, 0.1, 50.0, 2).values(), some.values()) == 0.0);
  }

  TEST_CASE("masking") {
    DgpConfig d;
    d.T = 10;
    d.p1 = 10;
    d.p2 = 10;
    const MatrixPanel p = gen_panel(d, QuantileLevel(0.5)).first;
    CHECK(mask_random(p, 0.0, 1).fully_observed());
    const MatrixPanel m = mask_random(p, 0.1, 1);
    CHECK(m.n_observed() == 900);
    const MatrixPanel mm = mask_random(m, 0.1, 2);
    CHECK(mm.n_observed() == 800);
    for (int t = 0; t < 10; ++t) CHECK((mm.mask(t) <= m.mask(t)).all());
    CHECK_THROWS_AS(mask_random(p, 1.0, 1), InvalidArgument);
  }

  TEST_CASE("standardize") {
    DgpConfig d;
    d.T = 30;
    d.p1 = 4;
    d.p2 = 3;
    const MatrixPanel s = standardize(gen_panel(d, QuantileLevel(0.5)).first);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) {
        double sum = 0.0, sq = 0.0;
        for (int t = 0; t < 30; ++t) {
          sum += s.slice(t)(i, j);
          sq += s.slice(t)(i, j) * s.slice(t)(i, j);
        }
        CHECK(std::abs(sum / 30.0) < 1e-12);
        CHECK(sq / 29.0 == doctest::Approx(1.0));
      }
  }

  TEST_CASE("method names") {
    for (Method m : {Method::RM, Method::IC, Method::ER, Method::VecRM})
      CHECK(parse_method(method_name(m)) == m);
    CHECK_THROWS_AS(parse_method("PCA"), InvalidArgument);
  }

  TEST_CASE("column and rotation alignment") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd A = testing::randn(20, 3, rng);
    Eigen::MatrixXd B(20, 3);
    B << -A.col(2), A.col(0), A.col(1);
    const ColumnAlignment al = align_columns(A, B);
    CHECK((al.aligned - A).norm() < 1e-12);
    CHECK(al.source == std::vector<int>{1, 2, 0});
    const Eigen::MatrixXd O = testing::random_orthonormal(3, rng);
    CHECK((align_rotation(A, A * O) - A).norm() < 1e-10);
  }

  TEST_CASE("noiseless experiments") {
    ExperimentSettings s;
    s.dgp.theta_star = 0.0;
    s.fit.obj_rel_tol = 1e-4;
    s.fit.n_restarts = 2;
    const std::vector<GridCell> grid{{20, 20, 20, NoiseLaw::normal()}};
    const auto rows = run_selection_experiment(s, grid, QuantileLevel(0.5), 2, {Method::RM, Method::ER});
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.frequency == 1.0);
    const auto load = run_loading_experiment(s, grid, QuantileLevel(0.5), 1);
    REQUIRE(load.size() == 1);
    CHECK(load[0].reps == 1);
    CHECK(load[0].mean_dist_R < 1e-4);
    CHECK(load[0].mean_dist_C < 1e-4);
    CHECK(load[0].mean_dist_W < 1e-4);
  }
}
