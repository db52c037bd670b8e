#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "mqf/estimator.hpp"

namespace mqf {

namespace {

struct OrthoSplit {
  Eigen::MatrixXd basis;  // p x k, orthonormal columns
  Eigen::MatrixXd coef;   // k x k, loading = basis * coef
};

OrthoSplit split(const Eigen::MatrixXd& loading, bool require_full_rank, const char* name) {
  const Eigen::Index p = loading.rows();
  const Eigen::Index k = loading.cols();
  if (k > p) throw InvalidArgument(std::string(name) + " has more columns than rows");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(loading);
  OrthoSplit out;
  out.basis = qr.householderQ() * Eigen::MatrixXd::Identity(p, k);
  out.coef = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  if (require_full_rank) {
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(out.coef).singularValues();
    if (!(sv.size() > 0 && sv.maxCoeff() > 0.0 && sv.minCoeff() > 1e-12 * sv.maxCoeff()))
      throw Degenerate(std::string(name) + " is rank deficient");
  }
  return out;
}

// Descending eigen-decomposition of a symmetric matrix.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> eig_desc(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

bool has_ties(const Eigen::VectorXd& desc) {
  for (Eigen::Index a = 0; a + 1 < desc.size(); ++a) {
    const double scale = std::max(std::abs(desc[a]), 1.0);
    if (desc[a] - desc[a + 1] < kIdentTol * scale) return true;
  }
  return false;
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> factor_sigmas(const FactorParams& theta) {
  const Eigen::Index k1 = theta.k1();
  const Eigen::Index k2 = theta.k2();
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(k1, k1);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k2, k2);
  for (const auto& f : theta.F) {
    s1.noalias() += f * f.transpose();
    s2.noalias() += f.transpose() * f;
  }
  const double T = static_cast<double>(std::max(theta.T(), 1));
  Eigen::VectorXd d1 = s1.diagonal() / T;
  Eigen::VectorXd d2 = s2.diagonal() / T;
  std::sort(d1.data(), d1.data() + d1.size(), std::greater<>());
  std::sort(d2.data(), d2.data() + d2.size(), std::greater<>());
  return {d1, d2};
}

NormalizeReport normalize_report(const FactorParams& theta, bool require_full_rank) {
  const int T = theta.T();
  if (T < 1) throw InvalidArgument("normalize requires at least one factor matrix");
  for (const auto& f : theta.F)
    if (f.rows() != theta.k1() || f.cols() != theta.k2())
      throw DimensionMismatch("factor matrix shape does not match loadings");
  const double p1 = theta.p1();
  const double p2 = theta.p2();
  const OrthoSplit r = split(theta.R, require_full_rank, "row loading");
  const OrthoSplit c = split(theta.C, require_full_rank, "column loading");

  const double scale = 1.0 / std::sqrt(p1 * p2);
  std::vector<Eigen::MatrixXd> g(static_cast<std::size_t>(T));
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(theta.k1(), theta.k1());
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(theta.k2(), theta.k2());
  for (int t = 0; t < T; ++t) {
    g[t] = scale * (r.coef * theta.F[t] * c.coef.transpose());
    s1.noalias() += g[t] * g[t].transpose();
    s2.noalias() += g[t].transpose() * g[t];
  }
  s1 /= T;
  s2 /= T;
  const auto [lambda1, gamma1] = eig_desc(s1);
  const auto [lambda2, gamma2] = eig_desc(s2);

  NormalizeReport out;
  out.tied_spectrum = has_ties(lambda1) || has_ties(lambda2);
  FactorParams& n = out.params;
  n.R = std::sqrt(p1) * r.basis * gamma1;
  n.C = std::sqrt(p2) * c.basis * gamma2;
  n.F.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) n.F[t] = gamma1.transpose() * g[t] * gamma2;

  auto first_significant_negative = [](const Eigen::MatrixXd& m, Eigen::Index col) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (std::abs(m(i, col)) > kSignTol) return m(i, col) < 0.0;
    return false;
  };
  for (Eigen::Index a = 0; a < n.R.cols(); ++a) {
    if (!first_significant_negative(n.R, a)) continue;
    n.R.col(a) *= -1.0;
    for (auto& f : n.F) f.row(a) *= -1.0;
  }
  for (Eigen::Index b = 0; b < n.C.cols(); ++b) {
    if (!first_significant_negative(n.C, b)) continue;
    n.C.col(b) *= -1.0;
    for (auto& f : n.F) f.col(b) *= -1.0;
  }
  return out;
}

FactorParams normalize(const FactorParams& theta) { return normalize_report(theta, true).params; }

FactorParams init_random(int p1, int p2, int T, int k1, int k2, std::uint64_t seed) {
  if (p1 < 1 || p2 < 1 || T < 1) throw InvalidArgument("dimensions must be positive");
  if (k1 < 1 || k2 < 1) throw InvalidArgument("factor numbers must be positive");
  if (k1 > p1 || k2 > p2) throw InvalidArgument("factor numbers exceed panel dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
    return m;
  };
  FactorParams theta;
  theta.R = draw(p1, k1);
  theta.C = draw(p2, k2);
  theta.F.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) theta.F.push_back(draw(k1, k2));
  return normalize(theta);
}

}  // namespace mqf
