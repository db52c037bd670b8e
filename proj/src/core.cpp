#include "mqf/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mqf/kernel.hpp"

namespace mqf {

QuantileLevel::QuantileLevel(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    std::ostringstream os;
    os << "quantile level must lie in (0,1), got " << tau;
    throw InvalidArgument(os.str());
  }
}

MatrixPanel::MatrixPanel(std::vector<Eigen::MatrixXd> values) : values_(std::move(values)) {
  mask_.reserve(values_.size());
  for (const auto& x : values_) mask_.push_back(Mask::Constant(x.rows(), x.cols(), true));
  validate();
}

MatrixPanel::MatrixPanel(std::vector<Eigen::MatrixXd> values, std::vector<Mask> mask)
    : values_(std::move(values)), mask_(std::move(mask)) {
  validate();
}

void MatrixPanel::validate() {
  if (values_.empty()) throw InvalidArgument("panel must contain at least one matrix");
  p1_ = static_cast<int>(values_.front().rows());
  p2_ = static_cast<int>(values_.front().cols());
  if (p1_ < 1 || p2_ < 1) throw InvalidArgument("panel matrices must be non-empty");
  if (mask_.size() != values_.size()) throw DimensionMismatch("mask length differs from panel length");
  n_observed_ = 0;
  for (std::size_t t = 0; t < values_.size(); ++t) {
    if (values_[t].rows() != p1_ || values_[t].cols() != p2_)
      throw DimensionMismatch("panel slice " + std::to_string(t + 1) + " has inconsistent shape");
    if (mask_[t].rows() != p1_ || mask_[t].cols() != p2_)
      throw DimensionMismatch("mask slice " + std::to_string(t + 1) + " has inconsistent shape");
    for (Eigen::Index j = 0; j < p2_; ++j)
      for (Eigen::Index i = 0; i < p1_; ++i) {
        if (!mask_[t](i, j)) continue;
        if (!std::isfinite(values_[t](i, j)))
          throw InvalidArgument("non-finite observed value in slice " + std::to_string(t + 1));
        ++n_observed_;
      }
  }
  if (n_observed_ == 0) throw InvalidArgument("panel has no observed entries");
}

double check_loss(double u, QuantileLevel tau) noexcept {
  return (tau.value() - (u <= 0.0 ? 1.0 : 0.0)) * u;
}

void check_dims(const MatrixPanel& panel, const FactorParams& theta) {
  if (theta.T() != panel.T() || theta.p1() != panel.p1() || theta.p2() != panel.p2()) {
    std::ostringstream os;
    os << "parameter dimensions (T=" << theta.T() << ", p1=" << theta.p1() << ", p2=" << theta.p2()
       << ") do not match panel (T=" << panel.T() << ", p1=" << panel.p1() << ", p2=" << panel.p2()
       << ")";
    throw DimensionMismatch(os.str());
  }
  for (const auto& f : theta.F)
    if (f.rows() != theta.k1() || f.cols() != theta.k2())
      throw DimensionMismatch("factor matrix shape does not match loadings");
}

namespace {

template <class Loss>
double panel_loss(const MatrixPanel& panel, const FactorParams& theta, Loss&& loss) {
  check_dims(panel, theta);
  // Fixed summation order (t, then column-major entries) for reproducibility.
  double total = 0.0;
  for (int t = 0; t < panel.T(); ++t) {
    const Eigen::MatrixXd fitted = theta.R * theta.F[t] * theta.C.transpose();
    const auto& x = panel.slice(t);
    const auto& m = panel.mask(t);
    double slice_sum = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (m(i, j)) slice_sum += loss(x(i, j) - fitted(i, j));
    total += slice_sum;
  }
  return total / static_cast<double>(panel.total());
}

}  // namespace

double objective(const MatrixPanel& panel, const FactorParams& theta, QuantileLevel tau) {
  return panel_loss(panel, theta, [tau](double u) { return check_loss(u, tau); });
}

double smoothed_objective(const MatrixPanel& panel, const FactorParams& theta, QuantileLevel tau,
                          const KernelSpec& kernel) {
  kernel.validate();
  const double t = tau.value();
  return panel_loss(panel, theta, [&](double u) { return kernel.loss(u, t); });
}

std::vector<Eigen::MatrixXd> common_component(const FactorParams& theta) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(theta.F.size());
  const Eigen::MatrixXd Ct = theta.C.transpose();
  for (const auto& f : theta.F) out.push_back(theta.R * f * Ct);
  return out;
}

double theta_distance(const FactorParams& a, const FactorParams& b) {
  if (a.T() != b.T() || a.p1() != b.p1() || a.p2() != b.p2())
    throw DimensionMismatch("theta_distance requires identical (T, p1, p2)");
  double sum = 0.0;
  for (int t = 0; t < a.T(); ++t) {
    const Eigen::MatrixXd diff =
        a.R * a.F[t] * a.C.transpose() - b.R * b.F[t] * b.C.transpose();
    sum += diff.squaredNorm();
  }
  return std::sqrt(sum / (static_cast<double>(a.p1()) * a.p2() * a.T()));
}

namespace {

void require_normalized(const Eigen::MatrixXd& a, const char* name) {
  const double p = static_cast<double>(a.rows());
  const Eigen::MatrixXd gram = a.transpose() * a / p;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.cols(), a.cols());
  const double rel = (gram - eye).norm() / std::sqrt(static_cast<double>(a.cols()));
  if (rel > kIdentTol) {
    std::ostringstream os;
    os << name << " violates A'A/p = I (deviation " << rel << ")";
    throw InvalidArgument(os.str());
  }
}

double projection_overlap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double p = static_cast<double>(a.rows());
  const Eigen::MatrixXd cross = a.transpose() * b;
  return cross.squaredNorm() / (p * p * static_cast<double>(a.cols()));
}

}  // namespace

double loading_distance(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw DimensionMismatch("loading_distance requires identically shaped loadings");
  require_normalized(truth, "reference loading");
  require_normalized(estimate, "estimated loading");
  const double overlap = std::clamp(projection_overlap(truth, estimate), 0.0, 1.0);
  return std::sqrt(1.0 - overlap);
}

double space_similarity(const Eigen::MatrixXd& a1, const Eigen::MatrixXd& a2) {
  if (a1.rows() != a2.rows() || a1.cols() != a2.cols())
    throw DimensionMismatch("space_similarity requires identically shaped loadings");
  require_normalized(a1, "first loading");
  require_normalized(a2, "second loading");
  return std::clamp(projection_overlap(a1, a2), 0.0, 1.0);
}

RateL rate_L(int p1, int p2, int T) {
  if (p1 < 1 || p2 < 1 || T < 1) throw InvalidArgument("rate_L requires positive dimensions");
  const double a = std::sqrt(static_cast<double>(p1) * p2);
  const double b = std::sqrt(static_cast<double>(p2) * T);
  const double c = std::sqrt(static_cast<double>(p1) * T);
  return RateL{std::min({a, b, c})};
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace mqf
