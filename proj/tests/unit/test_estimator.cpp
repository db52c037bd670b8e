#include <doctest.h>

#include <cmath>
#include <random>

#include "../helpers.hpp"
#include "mqf/estimator.hpp"
#include "mqf/simulate.hpp"

using namespace mqf;

namespace {

bool is_normalized(const FactorParams& p, double tol) {
  const auto [s1, s2] = factor_sigmas(p);
  Eigen::MatrixXd S1 = Eigen::MatrixXd::Zero(p.k1(), p.k1());
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(p.k2(), p.k2());
  for (const auto& f : p.F) {
    S1 += f * f.transpose() / p.T();
    S2 += f.transpose() * f / p.T();
  }
  auto offdiag = [](Eigen::MatrixXd m) {
    m.diagonal().setZero();
    return m.cwiseAbs().maxCoeff();
  };
  bool ok = (p.R.transpose() * p.R / p.p1() - Eigen::MatrixXd::Identity(p.k1(), p.k1())).norm() < tol;
  ok = ok && (p.C.transpose() * p.C / p.p2() - Eigen::MatrixXd::Identity(p.k2(), p.k2())).norm() < tol;
  ok = ok && offdiag(S1) < tol && offdiag(S2) < tol;
  for (int a = 0; a + 1 < p.k1(); ++a) ok = ok && S1(a, a) >= S1(a + 1, a + 1);
  for (int a = 0; a + 1 < p.k2(); ++a) ok = ok && S2(a, a) >= S2(a + 1, a + 1);
  ok = ok && (S1.diagonal() - s1).norm() < tol && (S2.diagonal() - s2).norm() < tol;
  return ok;
}

DgpConfig noiseless(int T, int p1, int p2, std::uint64_t seed) {
  DgpConfig d;
  d.T = T;
  d.p1 = p1;
  d.p2 = p2;
  d.theta_star = 0.0;
  d.seed = seed;
  return d;
}

}  // namespace

TEST_SUITE("estimator") {
  TEST_CASE("normalize produces the identification conditions") {
    const FactorParams raw = testing::random_params(6, 4, 5, 2, 2, 31);
    const FactorParams n = normalize(raw);
    CHECK(is_normalized(n, 1e-10));
    CHECK(testing::max_abs_diff(common_component(raw), common_component(n)) < 1e-10);
  }

  TEST_CASE("normalize is idempotent and invariant to rescaling") {
    const FactorParams raw = testing::random_params(8, 7, 6, 3, 2, 32);
    const FactorParams n = normalize(raw);
    const FactorParams nn = normalize(n);
    CHECK((n.R - nn.R).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((n.C - nn.C).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(testing::max_abs_diff(n.F, nn.F) < 1e-10);

    FactorParams scaled{2.0 * raw.R, 0.5 * raw.C, {}};
    for (const auto& f : raw.F) scaled.F.push_back(f);
    const FactorParams ns = normalize(scaled);
    CHECK((ns.R - n.R).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(testing::max_abs_diff(ns.F, n.F) < 1e-10);
  }

  TEST_CASE("normalize sign convention") {
    const FactorParams n = normalize(testing::random_params(9, 5, 4, 3, 2, 33));
    for (int a = 0; a < n.k1(); ++a) {
      int i = 0;
      while (std::abs(n.R(i, a)) <= kSignTol) ++i;
      CHECK(n.R(i, a) > 0.0);
    }
  }

  TEST_CASE("normalize rejects rank-deficient loadings") {
    FactorParams p = testing::random_params(6, 5, 3, 2, 2, 34);
    p.R.col(1) = p.R.col(0);
    CHECK_THROWS_AS(normalize(p), Degenerate);
  }

  TEST_CASE("init_random") {
    const FactorParams a = init_random(10, 8, 6, 2, 3, 5);
    const FactorParams b = init_random(10, 8, 6, 2, 3, 5);
    const FactorParams c = init_random(10, 8, 6, 2, 3, 6);
    CHECK(a.R == b.R);
    CHECK(a.C == b.C);
    CHECK(testing::max_abs_diff(a.F, b.F) == 0.0);
    CHECK(a.R != c.R);
    CHECK(is_normalized(a, 1e-10));
    const FactorParams full = init_random(4, 3, 5, 4, 1, 1);
    CHECK((full.R.transpose() * full.R / 4.0 - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-10);
    CHECK_THROWS_AS(init_random(4, 3, 5, 5, 1, 1), InvalidArgument);
  }

  TEST_CASE("noiseless fit recovers the truth") {
    const auto [panel, truth] = gen_panel(noiseless(30, 20, 20, 3), QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 2;
    cfg.k2 = 3;
    cfg.n_restarts = 3;
    const FitResult r = fit(panel, QuantileLevel(0.5), cfg);
    CHECK(r.converged);
    CHECK(theta_distance(r.params, truth.params) < 1e-4);
    CHECK(loading_distance(truth.params.R, r.params.R) < 1e-4);
    CHECK(loading_distance(truth.params.C, r.params.C) < 1e-4);
    CHECK(is_normalized(r.params, 1e-8));
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] + 1e-12);
  }

  TEST_CASE("fit is deterministic and thread-count invariant") {
    DgpConfig d;
    d.T = 12;
    d.p1 = 10;
    d.p2 = 9;
    d.seed = 8;
    const auto [panel, truth] = gen_panel(d, QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 2;
    cfg.k2 = 3;
    cfg.max_outer_iters = 10;
    const FitResult a = fit(panel, QuantileLevel(0.5), cfg);
    cfg.threads = 3;
    const FitResult b = fit(panel, QuantileLevel(0.5), cfg);
    CHECK(a.params.R == b.params.R);
    CHECK(a.params.C == b.params.C);
    CHECK(testing::max_abs_diff(a.params.F, b.params.F) == 0.0);
    CHECK(a.objective == b.objective);
  }

  TEST_CASE("fit validates inputs") {
    const auto [panel, truth] = gen_panel(noiseless(5, 6, 6, 1), QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 7;
    CHECK_THROWS_AS(fit(panel, QuantileLevel(0.5), cfg), InvalidArgument);
    cfg.k1 = 1;
    cfg.max_outer_iters = 0;
    CHECK_THROWS_AS(fit(panel, QuantileLevel(0.5), cfg), InvalidArgument);

    std::vector<Mask> m = panel.masks();
    m[2].setConstant(false);
    cfg.max_outer_iters = 5;
    CHECK_THROWS_AS(fit(MatrixPanel(panel.values(), m), QuantileLevel(0.5), cfg), Degenerate);
  }

  TEST_CASE("smoothed fit on a noiseless panel") {
    const auto [panel, truth] = gen_panel(noiseless(20, 15, 15, 4), QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 2;
    cfg.k2 = 3;
    cfg.n_restarts = 3;
    const FitResult r = smoothed_fit(panel, QuantileLevel(0.5), cfg, build_kernel(8, 0.3));
    CHECK(theta_distance(r.params, truth.params) < 1e-4);
  }

  TEST_CASE("smoothed fit approaches the unsmoothed fit as h shrinks") {
    DgpConfig d;
    d.T = 15;
    d.p1 = 12;
    d.p2 = 12;
    d.theta_star = 1.0;
    d.seed = 5;
    const auto [panel, truth] = gen_panel(d, QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 2;
    cfg.k2 = 3;
    const FitResult base = fit(panel, QuantileLevel(0.5), cfg);
    double prev = 1e300;
    for (double h : {1e-1, 1e-2, 1e-3}) {
      const FitResult s = smoothed_fit(panel, QuantileLevel(0.5), cfg, build_kernel(2, h), base.params);
      const double gap = std::abs(s.objective - base.objective);
      CHECK(gap < prev + 1e-9);
      prev = gap;
    }
    CHECK(prev < 1e-3);
  }

  TEST_CASE("residual density at zero for normal errors") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 1.0);
    FactorParams zero{Eigen::MatrixXd::Zero(50, 1), Eigen::MatrixXd::Zero(50, 1), {}};
    std::vector<Eigen::MatrixXd> x;
    for (int t = 0; t < 50; ++t) {
      zero.F.push_back(Eigen::MatrixXd::Zero(1, 1));
      Eigen::MatrixXd s(50, 50);
      for (int j = 0; j < 50; ++j)
        for (int i = 0; i < 50; ++i) s(i, j) = n(rng);
      x.push_back(s);
    }
    const double f = residual_density_at_zero(MatrixPanel(x), zero, QuantileLevel(0.5), 0.0);
    CHECK(f == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(0.1));
  }

  TEST_CASE("impute") {
    const auto [panel, truth] = gen_panel(noiseless(20, 16, 16, 6), QuantileLevel(0.5));
    FitConfig cfg;
    cfg.k1 = 2;
    cfg.k2 = 3;
    cfg.n_restarts = 3;
    const FitResult full = fit(panel, QuantileLevel(0.5), cfg);
    const MatrixPanel same = impute(panel, full);
    CHECK(testing::max_abs_diff(same.values(), panel.values()) == 0.0);

    const MatrixPanel masked = mask_random(panel, 0.1, 2);
    const FitResult r = fit(masked, QuantileLevel(0.5), cfg);
    const MatrixPanel filled = impute(masked, r);
    CHECK(filled.fully_observed());
    CHECK(testing::max_abs_diff(filled.values(), panel.values()) < 1e-4);
  }
}
