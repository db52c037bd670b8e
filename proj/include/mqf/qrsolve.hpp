#pragma once

// Linear quantile regression subproblems: min_beta sum_i rho_tau(y_i - x_i' beta),
// plus the kernel-smoothed variant.
//
// The solvers are templates over a design type so the alternating estimator
// can pass structured designs (rows c_j (x) r_i) without materializing them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "mqf/core.hpp"
#include "mqf/kernel.hpp"

namespace mqf {

template <class D>
concept QrDesign = requires(const D& d, const Eigen::VectorXd& v, Eigen::Index i) {
  { d.rows() } -> std::convertible_to<Eigen::Index>;
  { d.cols() } -> std::convertible_to<Eigen::Index>;
  { d.multiply(v) } -> std::convertible_to<Eigen::VectorXd>;
  { d.multiply_transpose(v) } -> std::convertible_to<Eigen::VectorXd>;
  { d.weighted_gram(v) } -> std::convertible_to<Eigen::MatrixXd>;
  { d.row(i) } -> std::convertible_to<Eigen::VectorXd>;
};

/// View over an explicit n x d design matrix.
class DenseDesign {
 public:
  explicit DenseDesign(const Eigen::MatrixXd& x) : x_(&x) {}

  Eigen::Index rows() const { return x_->rows(); }
  Eigen::Index cols() const { return x_->cols(); }
  Eigen::VectorXd multiply(const Eigen::VectorXd& beta) const { return *x_ * beta; }
  Eigen::VectorXd multiply_transpose(const Eigen::VectorXd& v) const {
    return x_->transpose() * v;
  }
  Eigen::MatrixXd weighted_gram(const Eigen::VectorXd& w) const {
    // Smoothed-loss curvature can be negative away from zero.
    if ((w.array() < 0.0).any()) return x_->transpose() * w.asDiagonal() * *x_;
    const Eigen::MatrixXd xw = x_->array().colwise() * w.array().sqrt();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(x_->cols(), x_->cols());
    g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    return g.selfadjointView<Eigen::Lower>();
  }
  Eigen::VectorXd row(Eigen::Index i) const { return x_->row(i).transpose(); }

 private:
  const Eigen::MatrixXd* x_;
};

/// Design with rows vec(r_i c_j')' = (c_j (x) r_i)' over a set of (i, j)
/// cells; the coefficient vector is vec(B) for a k1 x k2 matrix B.
class KroneckerDesign {
 public:
  /// All p1 * p2 cells in column-major order (i + p1 j).
  KroneckerDesign(const Eigen::MatrixXd& R, const Eigen::MatrixXd& C);
  /// Only cells where mask(i, j) is true, column-major order.
  KroneckerDesign(const Eigen::MatrixXd& R, const Eigen::MatrixXd& C, const Mask& mask);

  Eigen::Index rows() const { return static_cast<Eigen::Index>(cells_i_.size()); }
  Eigen::Index cols() const { return R_->cols() * C_->cols(); }
  Eigen::VectorXd multiply(const Eigen::VectorXd& beta) const;
  Eigen::VectorXd multiply_transpose(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd weighted_gram(const Eigen::VectorXd& w) const;
  Eigen::VectorXd row(Eigen::Index n) const;

 private:
  Eigen::MatrixXd scatter(const Eigen::VectorXd& v) const;
  void build_outer_rows();

  const Eigen::MatrixXd* R_;
  const Eigen::MatrixXd* C_;
  std::vector<int> cells_i_;
  std::vector<int> cells_j_;
  Eigen::MatrixXd outer_rows_r_;  // p1 x k1^2, row i = vec(r_i r_i')'
  Eigen::MatrixXd outer_rows_c_;  // p2 x k2^2
  bool full_ = true;
};

struct QrProblem {
  Eigen::VectorXd responses;
  Eigen::MatrixXd design;
  QuantileLevel tau{0.5};
  std::vector<bool> include;  // empty means every row is included
};

struct QrSolution {
  Eigen::VectorXd beta;
  double objective = 0.0;  // sum of per-observation losses at beta
  int iterations = 0;
  bool converged = false;
  bool ridge_used = false;
};

struct QrOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

/// Unsmoothed solve. Throws Degenerate on rank-deficient included design.
Eigen::VectorXd solve_qr(const QrProblem& problem,
                         const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                         double tol = 1e-10);

/// Smoothed solve; on return the mean-loss gradient norm is <= tol when the
/// solution reports converged.
Eigen::VectorXd solve_qr_smoothed(const QrProblem& problem, const KernelSpec& kernel,
                                  const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                                  double tol = 1e-9);

double qr_objective(const Eigen::VectorXd& residuals, double tau) noexcept;

namespace detail {

/// Cholesky of a symmetric matrix, falling back to a tiny ridge when it is
/// numerically singular.
class GramSolver {
 public:
  explicit GramSolver(const Eigen::MatrixXd& q) : llt_(q) {
    if (llt_.info() == Eigen::Success && finite_diag()) return;
    const double scale = std::max(q.diagonal().cwiseAbs().maxCoeff(), 1.0);
    for (double ridge = 1e-10; ridge < 1e6; ridge *= 100.0) {
      llt_.compute(q + ridge * scale * Eigen::MatrixXd::Identity(q.rows(), q.cols()));
      ridge_used_ = true;
      if (llt_.info() == Eigen::Success && finite_diag()) return;
    }
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }
  bool ridge_used() const { return ridge_used_; }

 private:
  bool finite_diag() const {
    const auto& l = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
      if (!std::isfinite(l(i, i)) || l(i, i) <= 0.0) return false;
    return true;
  }
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool ridge_used_ = false;
};

/// Replace beta by the exact interpolating solution through the d
/// observations with the smallest absolute residuals, when that does not
/// increase the objective.
template <QrDesign D>
void polish_vertex(const D& design, const Eigen::VectorXd& y, double tau, QrSolution& sol) {
  const Eigen::Index n = design.rows();
  const Eigen::Index d = design.cols();
  if (n < d) return;
  const Eigen::VectorXd resid = y - design.multiply(sol.beta);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::partial_sort(order.begin(), order.begin() + d, order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double ra = std::abs(resid[a]);
                      const double rb = std::abs(resid[b]);
                      return ra < rb || (ra == rb && a < b);
                    });
  Eigen::MatrixXd basis(d, d);
  Eigen::VectorXd rhs(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    basis.row(k) = design.row(order[k]).transpose();
    rhs[k] = y[order[k]];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(basis);
  if (lu.rank() < d) return;
  const Eigen::VectorXd candidate = lu.solve(rhs);
  if (!candidate.allFinite()) return;
  const double obj = qr_objective(y - design.multiply(candidate), tau);
  // Summation rounding can put the exact vertex a few ulps above the iterate.
  if (obj <= sol.objective + 1e-12 * std::max(1.0, std::abs(sol.objective))) {
    sol.beta = candidate;
    sol.objective = obj;
  }
}

/// Frisch-Newton interior point method on the dual LP
///   max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1.
template <QrDesign D>
QrSolution frisch_newton(const D& design, const Eigen::VectorXd& y, double tau,
                         const QrOptions& opts) {
  constexpr double kStep = 0.99995;
  const Eigen::Index n = design.rows();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd b = (1.0 - tau) * design.multiply_transpose(ones);

  QrSolution sol;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);
  // Least-squares start for the dual variable (c = -y).
  GramSolver ls(design.weighted_gram(ones));
  sol.ridge_used = ls.ridge_used();
  Eigen::VectorXd dual = ls.solve(design.multiply_transpose(-y));
  Eigen::VectorXd r = -y - design.multiply(dual);
  Eigen::VectorXd z(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r[i] == 0.0) r[i] = 1e-3;
    z[i] = std::max(r[i], 0.0);
    w[i] = z[i] - r[i];
  }

  auto duality_gap = [&] { return -y.dot(x) - dual.dot(b) + w.sum(); };
  double gap = duality_gap();
  const double scale = 1.0 + std::abs(-y.dot(x) - dual.dot(b)) + w.sum();

  Eigen::VectorXd q(n), dx(n), dz(n), dw(n), corr(n), fitted(n);
  auto bound = [](double v, double dv, double& acc) {
    if (dv < 0.0) acc = std::min(acc, -v / dv);
  };
  int it = 0;
  while (gap > opts.tol * scale && it < opts.max_iter) {
    ++it;
    for (Eigen::Index i = 0; i < n; ++i) {
      q[i] = 1.0 / (z[i] / x[i] + w[i] / s[i]);
      r[i] = z[i] - w[i];
      corr[i] = q[i] * r[i];
    }
    GramSolver gram(design.weighted_gram(q));
    sol.ridge_used = sol.ridge_used || gram.ridge_used();
    Eigen::VectorXd rhs = design.multiply_transpose(corr);
    Eigen::VectorXd dy = gram.solve(rhs);
    fitted = design.multiply(dy);
    double bp = 1e20, bd = 1e20;
    for (Eigen::Index i = 0; i < n; ++i) {
      dx[i] = q[i] * (fitted[i] - r[i]);
      dz[i] = -z[i] * (dx[i] / x[i] + 1.0);
      dw[i] = -w[i] * (-dx[i] / s[i] + 1.0);
      bound(x[i], dx[i], bp);
      bound(s[i], -dx[i], bp);
      bound(w[i], dw[i], bd);
      bound(z[i], dz[i], bd);
    }
    double fp = std::min(kStep * bp, 1.0);
    double fd = std::min(kStep * bd, 1.0);
    if (std::min(fp, fd) < 1.0) {
      // Mehrotra predictor-corrector.
      double mu = 0.0, g = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        mu += z[i] * x[i] + w[i] * s[i];
        g += (z[i] + fd * dz[i]) * (x[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] - fp * dx[i]);
      }
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        // dxdz - dsdw - xi, with ds = -dx
        const double xi = mu * (1.0 / x[i] - 1.0 / s[i]);
        corr[i] = q[i] * (dx[i] * dz[i] + dx[i] * dw[i] - xi);
      }
      rhs += design.multiply_transpose(corr);
      dy = gram.solve(rhs);
      fitted = design.multiply(dy);
      bp = 1e20;
      bd = 1e20;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double xinv = 1.0 / x[i];
        const double sinv = 1.0 / s[i];
        const double dxdz = dx[i] * dz[i];
        const double dsdw = -dx[i] * dw[i];
        const double xi = mu * (xinv - sinv);
        const double dxn = q[i] * (fitted[i] + xi - r[i] - dxdz + dsdw);
        dx[i] = dxn;
        dz[i] = mu * xinv - z[i] - xinv * z[i] * dxn - dxdz;
        dw[i] = mu * sinv - w[i] + sinv * w[i] * dxn - dsdw;
        bound(x[i], dx[i], bp);
        bound(s[i], -dx[i], bp);
        bound(w[i], dw[i], bd);
        bound(z[i], dz[i], bd);
      }
      fp = std::min(kStep * bp, 1.0);
      fd = std::min(kStep * bd, 1.0);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      x[i] += fp * dx[i];
      s[i] -= fp * dx[i];
      w[i] += fd * dw[i];
      z[i] += fd * dz[i];
    }
    dual += fd * dy;
    gap = duality_gap();
    if (!std::isfinite(gap)) break;
  }
  sol.beta = -dual;
  sol.iterations = it;
  sol.converged = gap <= opts.tol * scale;
  sol.objective = qr_objective(y - design.multiply(sol.beta), tau);
  return sol;
}

}  // namespace detail

/// Unsmoothed solve over an arbitrary design. A warm start is used as a
/// fallback: the returned objective never exceeds the warm start's.
template <QrDesign D>
QrSolution solve_qr_design(const D& design, const Eigen::VectorXd& y, double tau,
                           const Eigen::VectorXd* warm_start = nullptr,
                           const QrOptions& opts = {}) {
  QrSolution sol = detail::frisch_newton(design, y, tau, opts);
  detail::polish_vertex(design, y, tau, sol);
  if (warm_start != nullptr && warm_start->size() == design.cols()) {
    const double warm_obj = qr_objective(y - design.multiply(*warm_start), tau);
    if (warm_obj < sol.objective || !sol.beta.allFinite()) {
      sol.beta = *warm_start;
      sol.objective = warm_obj;
    }
  }
  return sol;
}

/// Damped Newton on the smoothed loss sum_i (tau - K(u_i/h)) u_i. The loss is
/// not convex for kernels of order > 2, so Levenberg-Marquardt damping keeps
/// each step a descent direction.
template <QrDesign D>
QrSolution solve_qr_smoothed_design(const D& design, const Eigen::VectorXd& y, double tau,
                                    const KernelSpec& kernel, const Eigen::VectorXd& start,
                                    const QrOptions& opts = {}) {
  const Eigen::Index n = design.rows();
  const Eigen::Index d = design.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  auto mean_loss = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd u = y - design.multiply(beta);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += kernel.loss(u[i], tau);
    return acc * inv_n;
  };

  QrSolution sol;
  sol.beta = start;
  double f = mean_loss(sol.beta);
  double lambda = 0.0;
  Eigen::VectorXd u(n), d1(n), d2(n);
  for (int it = 0; it < opts.max_iter; ++it) {
    u = y - design.multiply(sol.beta);
    for (Eigen::Index i = 0; i < n; ++i) {
      d1[i] = kernel.dloss(u[i], tau);
      d2[i] = kernel.d2loss(u[i], tau);
    }
    const Eigen::VectorXd grad = -design.multiply_transpose(d1) * inv_n;
    sol.iterations = it;
    if (grad.norm() <= opts.tol) {
      sol.converged = true;
      break;
    }
    const Eigen::MatrixXd hess = design.weighted_gram(d2) * inv_n;
    const double hscale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-12);
    bool moved = false;
    for (int attempt = 0; attempt < 40 && !moved; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(hess + lambda * hscale * Eigen::MatrixXd::Identity(d, d));
      if (llt.info() != Eigen::Success) {
        lambda = std::max(lambda * 10.0, 1e-8);
        continue;
      }
      const Eigen::VectorXd step = llt.solve(-grad);
      const double slope = grad.dot(step);
      if (!(slope < 0.0)) {
        lambda = std::max(lambda * 10.0, 1e-8);
        continue;
      }
      double alpha = 1.0;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        const Eigen::VectorXd trial = sol.beta + alpha * step;
        const double ft = mean_loss(trial);
        if (ft <= f + 1e-4 * alpha * slope) {
          sol.beta = trial;
          f = ft;
          moved = true;
          break;
        }
      }
      if (!moved) lambda = std::max(lambda * 10.0, 1e-8);
    }
    if (!moved) break;  // at the floating-point floor
    lambda *= 0.1;
    if (lambda < 1e-12) lambda = 0.0;
  }
  if (!sol.converged) {
    u = y - design.multiply(sol.beta);
    for (Eigen::Index i = 0; i < n; ++i) d1[i] = kernel.dloss(u[i], tau);
    sol.converged = (design.multiply_transpose(d1) * inv_n).norm() <= opts.tol;
  }
  sol.objective = f * static_cast<double>(n);
  return sol;
}

}  // namespace mqf
