#pragma once

// Panel and matrix serialization.
//
// Long CSV: header `t,i,j,value`, 1-based indices, absent rows are missing.
// Dense binary: little-endian float64, t-major then row-major, NaN marks a
// missing entry; a JSON sidecar `<path>.json` holds {"T", "p1", "p2"}.

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqf/core.hpp"

namespace mqf {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PanelDims {
  int T;
  int p1;
  int p2;
};

/// Dimensions default to the largest index seen per axis.
MatrixPanel read_long_csv(const std::string& path, std::optional<PanelDims> dims = std::nullopt);
void write_long_csv(const std::string& path, const MatrixPanel& panel);

MatrixPanel read_dense(const std::string& path);
void write_dense(const std::string& path, const MatrixPanel& panel);
std::string dense_sidecar(const std::string& path);

/// Dispatch on extension: `.csv` is long CSV, anything else dense binary.
MatrixPanel read_panel(const std::string& path, std::optional<PanelDims> dims = std::nullopt);

/// 17 significant digits.
std::string format_double(double v);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::string& path);
/// T blocks of k1 rows stacked vertically.
void write_factors_csv(const std::string& path, const std::vector<Eigen::MatrixXd>& F);
std::vector<Eigen::MatrixXd> read_factors_csv(const std::string& path, int k1);

}  // namespace mqf
