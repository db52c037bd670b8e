#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "mqf/core.hpp"

namespace testing {

inline Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline mqf::FactorParams random_params(int p1, int p2, int T, int k1, int k2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  mqf::FactorParams p;
  p.R = randn(p1, k1, rng);
  p.C = randn(p2, k2, rng);
  for (int t = 0; t < T; ++t) p.F.push_back(randn(k1, k2, rng));
  return p;
}

inline Eigen::MatrixXd random_orthonormal(int k, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(randn(k, k, rng));
  return qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
}

inline mqf::MatrixPanel panel_of(const mqf::FactorParams& p) {
  return mqf::MatrixPanel(mqf::common_component(p));
}

inline double max_abs_diff(const std::vector<Eigen::MatrixXd>& a,
                           const std::vector<Eigen::MatrixXd>& b) {
  double m = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) m = std::max(m, (a[t] - b[t]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace testing
