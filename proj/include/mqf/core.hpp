#pragma once

// Domain types, losses, objectives and subspace metrics for matrix quantile
// factor models X_t = R F_t C' + E_t.

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mqf {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation hits a degenerate input (rank deficiency,
/// an all-masked slice, zero spread).
class Degenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Identification tolerances shared across modules.
inline constexpr double kIdentTol = 1e-8;
inline constexpr double kSignTol = 1e-10;

class QuantileLevel {
 public:
  explicit QuantileLevel(double tau);
  double value() const noexcept { return tau_; }
  operator double() const noexcept { return tau_; }

 private:
  double tau_;
};

/// The observed sequence {X_t}, each p1 x p2, with an observation mask
/// (true = observed).
class MatrixPanel {
 public:
  MatrixPanel() = default;
  explicit MatrixPanel(std::vector<Eigen::MatrixXd> values);
  MatrixPanel(std::vector<Eigen::MatrixXd> values, std::vector<Mask> mask);

  int T() const noexcept { return static_cast<int>(values_.size()); }
  int p1() const noexcept { return p1_; }
  int p2() const noexcept { return p2_; }

  const Eigen::MatrixXd& slice(int t) const { return values_.at(t); }
  const Mask& mask(int t) const { return mask_.at(t); }
  const std::vector<Eigen::MatrixXd>& values() const noexcept { return values_; }
  const std::vector<Mask>& masks() const noexcept { return mask_; }

  bool observed(int t, int i, int j) const { return mask_[t](i, j); }
  bool fully_observed() const noexcept { return n_observed_ == total(); }
  std::size_t n_observed() const noexcept { return n_observed_; }
  std::size_t total() const noexcept {
    return static_cast<std::size_t>(T()) * p1_ * p2_;
  }

 private:
  void validate();

  std::vector<Eigen::MatrixXd> values_;
  std::vector<Mask> mask_;
  int p1_ = 0;
  int p2_ = 0;
  std::size_t n_observed_ = 0;
};

/// theta = (R, C, {F_t}).
struct FactorParams {
  Eigen::MatrixXd R;               // p1 x k1
  Eigen::MatrixXd C;               // p2 x k2
  std::vector<Eigen::MatrixXd> F;  // T matrices, k1 x k2

  int p1() const { return static_cast<int>(R.rows()); }
  int p2() const { return static_cast<int>(C.rows()); }
  int k1() const { return static_cast<int>(R.cols()); }
  int k2() const { return static_cast<int>(C.cols()); }
  int T() const { return static_cast<int>(F.size()); }
};

struct FitResult {
  FactorParams params;
  double objective = 0.0;
  std::vector<double> objective_trace;
  Eigen::VectorXd sigma1;  // diag of sum_t F_t F_t' / T, descending
  Eigen::VectorXd sigma2;  // diag of sum_t F_t' F_t / T, descending
  int iterations = 0;
  bool converged = false;
  // Diagnostics.
  bool tied_spectrum = false;
  bool ridge_used = false;
};

struct RateL {
  double value;
};

struct KernelSpec;

double check_loss(double u, QuantileLevel tau) noexcept;

double objective(const MatrixPanel& panel, const FactorParams& theta, QuantileLevel tau);

double smoothed_objective(const MatrixPanel& panel, const FactorParams& theta,
                          QuantileLevel tau, const KernelSpec& kernel);

/// sqrt(sum_t ||R_a F_at C_a' - R_b F_bt C_b'||_F^2 / (p1 p2 T)).
double theta_distance(const FactorParams& a, const FactorParams& b);

/// (1 - tr(Ahat' A0 A0' Ahat) / (k p^2))^{1/2} for p x k inputs with A'A/p = I.
double loading_distance(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate);

/// tr(A1' A2 A2' A1 / p^2) / k.
double space_similarity(const Eigen::MatrixXd& a1, const Eigen::MatrixXd& a2);

std::vector<Eigen::MatrixXd> common_component(const FactorParams& theta);

RateL rate_L(int p1, int p2, int T);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

void check_dims(const MatrixPanel& panel, const FactorParams& theta);

}  // namespace mqf
