#include "mqf/qrsolve.hpp"

#include <sstream>

namespace mqf {

double qr_objective(const Eigen::VectorXd& residuals, double tau) noexcept {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double u = residuals[i];
    acc += (tau - (u <= 0.0 ? 1.0 : 0.0)) * u;
  }
  return acc;
}

KroneckerDesign::KroneckerDesign(const Eigen::MatrixXd& R, const Eigen::MatrixXd& C)
    : R_(&R), C_(&C) {
  build_outer_rows();
  const int p1 = static_cast<int>(R.rows());
  const int p2 = static_cast<int>(C.rows());
  cells_i_.reserve(static_cast<std::size_t>(p1) * p2);
  cells_j_.reserve(static_cast<std::size_t>(p1) * p2);
  for (int j = 0; j < p2; ++j)
    for (int i = 0; i < p1; ++i) {
      cells_i_.push_back(i);
      cells_j_.push_back(j);
    }
}

KroneckerDesign::KroneckerDesign(const Eigen::MatrixXd& R, const Eigen::MatrixXd& C,
                                 const Mask& mask)
    : R_(&R), C_(&C), full_(false) {
  build_outer_rows();
  if (mask.rows() != R.rows() || mask.cols() != C.rows())
    throw DimensionMismatch("mask shape does not match loadings");
  for (int j = 0; j < mask.cols(); ++j)
    for (int i = 0; i < mask.rows(); ++i)
      if (mask(i, j)) {
        cells_i_.push_back(i);
        cells_j_.push_back(j);
      }
  full_ = cells_i_.size() == static_cast<std::size_t>(mask.size());
}

namespace {

Eigen::MatrixXd outer_rows(const Eigen::MatrixXd& a) {
  const Eigen::Index k = a.cols();
  Eigen::MatrixXd out(a.rows(), k * k);
  for (Eigen::Index c2 = 0; c2 < k; ++c2)
    for (Eigen::Index c1 = 0; c1 < k; ++c1) out.col(c1 + k * c2) = a.col(c1).cwiseProduct(a.col(c2));
  return out;
}

}  // namespace

void KroneckerDesign::build_outer_rows() {
  outer_rows_r_ = outer_rows(*R_);
  outer_rows_c_ = outer_rows(*C_);
}

Eigen::MatrixXd KroneckerDesign::scatter(const Eigen::VectorXd& v) const {
  if (full_) return Eigen::Map<const Eigen::MatrixXd>(v.data(), R_->rows(), C_->rows());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(R_->rows(), C_->rows());
  for (std::size_t n = 0; n < cells_i_.size(); ++n) out(cells_i_[n], cells_j_[n]) = v[n];
  return out;
}

Eigen::VectorXd KroneckerDesign::multiply(const Eigen::VectorXd& beta) const {
  const Eigen::Map<const Eigen::MatrixXd> B(beta.data(), R_->cols(), C_->cols());
  const Eigen::MatrixXd fitted = (*R_ * B) * C_->transpose();
  if (full_) return Eigen::Map<const Eigen::VectorXd>(fitted.data(), fitted.size());
  Eigen::VectorXd out(rows());
  for (std::size_t n = 0; n < cells_i_.size(); ++n) out[n] = fitted(cells_i_[n], cells_j_[n]);
  return out;
}

Eigen::VectorXd KroneckerDesign::multiply_transpose(const Eigen::VectorXd& v) const {
  const Eigen::MatrixXd m = R_->transpose() * scatter(v) * *C_;
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd KroneckerDesign::weighted_gram(const Eigen::VectorXd& w) const {
  // Entry ((a1,b1),(a2,b2)) is sum_ij W_ij R_i,a1 R_i,a2 C_j,b1 C_j,b2, i.e. a
  // rearrangement of A' W B with A_i = vec(r_i r_i'), B_j = vec(c_j c_j').
  const Eigen::Index k1 = R_->cols();
  const Eigen::Index k2 = C_->cols();
  const Eigen::MatrixXd m = outer_rows_r_.transpose() * scatter(w) * outer_rows_c_;
  Eigen::MatrixXd gram(k1 * k2, k1 * k2);
  for (Eigen::Index b2 = 0; b2 < k2; ++b2)
    for (Eigen::Index b1 = 0; b1 < k2; ++b1)
      for (Eigen::Index a2 = 0; a2 < k1; ++a2)
        for (Eigen::Index a1 = 0; a1 < k1; ++a1)
          gram(a1 + k1 * b1, a2 + k1 * b2) = m(a1 + k1 * a2, b1 + k2 * b2);
  return gram;
}

Eigen::VectorXd KroneckerDesign::row(Eigen::Index n) const {
  const Eigen::Index k1 = R_->cols();
  const Eigen::Index k2 = C_->cols();
  Eigen::VectorXd out(k1 * k2);
  const int i = cells_i_[n];
  const int j = cells_j_[n];
  for (Eigen::Index b = 0; b < k2; ++b)
    out.segment(b * k1, k1) = (*C_)(j, b) * R_->row(i).transpose();
  return out;
}

namespace {

struct Compacted {
  Eigen::MatrixXd design;
  Eigen::VectorXd y;
};

Compacted compact(const QrProblem& p) {
  const Eigen::Index n = p.responses.size();
  if (p.design.rows() != n)
    throw DimensionMismatch("design rows do not match number of responses");
  if (p.design.cols() < 1) throw InvalidArgument("design must have at least one column");
  if (!p.include.empty() && static_cast<Eigen::Index>(p.include.size()) != n)
    throw DimensionMismatch("include mask length does not match responses");
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (p.include.empty() || p.include[static_cast<std::size_t>(i)]) rows.push_back(i);
  if (rows.empty()) throw Degenerate("quantile regression has no included observations");
  Compacted out{Eigen::MatrixXd(rows.size(), p.design.cols()), Eigen::VectorXd(rows.size())};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.design.row(k) = p.design.row(rows[k]);
    out.y[k] = p.responses[rows[k]];
  }
  if (!out.design.allFinite() || !out.y.allFinite())
    throw InvalidArgument("quantile regression inputs must be finite");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(out.design);
  if (qr.rank() < out.design.cols()) {
    std::ostringstream os;
    os << "rank-deficient design: rank " << qr.rank() << " < " << out.design.cols();
    throw Degenerate(os.str());
  }
  return out;
}

}  // namespace

Eigen::VectorXd solve_qr(const QrProblem& problem, const std::optional<Eigen::VectorXd>& warm_start,
                         double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("solver tolerance must be positive");
  const Compacted c = compact(problem);
  const DenseDesign design(c.design);
  QrOptions opts;
  opts.tol = tol;
  const Eigen::VectorXd* warm = warm_start ? &*warm_start : nullptr;
  return solve_qr_design(design, c.y, problem.tau.value(), warm, opts).beta;
}

Eigen::VectorXd solve_qr_smoothed(const QrProblem& problem, const KernelSpec& kernel,
                                  const std::optional<Eigen::VectorXd>& warm_start, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("solver tolerance must be positive");
  kernel.validate();
  const Compacted c = compact(problem);
  const DenseDesign design(c.design);
  QrOptions opts;
  opts.tol = tol;
  Eigen::VectorXd start;
  if (warm_start && warm_start->size() == c.design.cols()) {
    start = *warm_start;
  } else {
    start = solve_qr_design(design, c.y, problem.tau.value()).beta;
  }
  return solve_qr_smoothed_design(design, c.y, problem.tau.value(), kernel, start, opts).beta;
}

}  // namespace mqf
