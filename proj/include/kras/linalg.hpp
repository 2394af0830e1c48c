#pragma once

// Small dense helpers shared across modules: Kronecker products, block
// concatenation, direct sums and vec stacking.

#include <Eigen/Dense>
#include <vector>

#include "kras/errors.hpp"

namespace kras {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

/// Horizontal concatenation; empty (0-column) pieces are skipped.
inline MatrixXd hcat(const std::vector<MatrixXd>& parts) {
  int rows = 0, cols = 0;
  for (const auto& P : parts) {
    if (P.size() == 0 && P.rows() == 0) continue;
    rows = std::max<int>(rows, int(P.rows()));
    cols += int(P.cols());
  }
  MatrixXd M(rows, cols);
  int at = 0;
  for (const auto& P : parts) {
    if (P.cols() == 0) continue;
    if (P.rows() != rows) throw DimensionMismatch("hcat: row mismatch");
    M.middleCols(at, int(P.cols())) = P;
    at += int(P.cols());
  }
  return M;
}

inline MatrixXd vcat(const std::vector<MatrixXd>& parts) {
  int rows = 0, cols = 0;
  for (const auto& P : parts) {
    if (P.size() == 0 && P.cols() == 0) continue;
    cols = std::max<int>(cols, int(P.cols()));
    rows += int(P.rows());
  }
  MatrixXd M(rows, cols);
  int at = 0;
  for (const auto& P : parts) {
    if (P.rows() == 0) continue;
    if (P.cols() != cols) throw DimensionMismatch("vcat: column mismatch");
    M.middleRows(at, int(P.rows())) = P;
    at += int(P.rows());
  }
  return M;
}

/// Direct sum diag(A_1, ..., A_k); blocks may be rectangular or empty.
inline MatrixXd dirsum(const std::vector<MatrixXd>& parts) {
  int rows = 0, cols = 0;
  for (const auto& P : parts) {
    rows += int(P.rows());
    cols += int(P.cols());
  }
  MatrixXd M = MatrixXd::Zero(rows, cols);
  int r = 0, c = 0;
  for (const auto& P : parts) {
    if (P.rows() > 0 && P.cols() > 0) M.block(r, c, P.rows(), P.cols()) = P;
    r += int(P.rows());
    c += int(P.cols());
  }
  return M;
}

/// Column-major vec of a matrix.
inline VectorXd vec(const MatrixXd& M) {
  return Eigen::Map<const VectorXd>(M.data(), M.size());
}

inline MatrixXd sy(const MatrixXd& M) { return M + M.transpose(); }

}  // namespace kras
