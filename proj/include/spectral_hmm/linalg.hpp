#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

namespace spectral_hmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Alphabet symbol, 0-based in the library API (files and CLI are 1-based).
using Symbol = std::size_t;

namespace linalg {

inline constexpr double kRankRelTol = 1e-12;

/// Threshold below which a singular value counts as zero:
/// max(rows, cols) * sigma_1 * 1e-12.
inline double rank_tolerance(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * sigma_max * kRankRelTol;
}

inline Vector singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector();
  return Eigen::BDCSVD<Matrix>(a).singularValues();
}

/// k-th largest singular value (1-based k); zero when k exceeds min(rows, cols).
inline double sigma_k(const Matrix& a, Eigen::Index k) {
  const Vector s = singular_values(a);
  return k >= 1 && k <= s.size() ? s(k - 1) : 0.0;
}

inline Eigen::Index numerical_rank(const Matrix& a) {
  const Vector s = singular_values(a);
  if (s.size() == 0) return 0;
  const double tol = rank_tolerance(a.rows(), a.cols(), s(0));
  return (s.array() > tol).count();
}

/// Moore-Penrose pseudoinverse via SVD, zeroing singular values at the rank tolerance.
inline Matrix pinv(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector inv = Vector::Zero(s.size());
  if (s.size() > 0) {
    const double tol = rank_tolerance(a.rows(), a.cols(), s(0));
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > tol) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Operator 2-norm (largest singular value). For vectors this is the Euclidean norm.
inline double spectral_norm(const Matrix& a) {
  if (a.cols() == 1 || a.rows() == 1) return a.norm();
  const Vector s = singular_values(a);
  return s.size() > 0 ? s(0) : 0.0;
}

/// Induced 1-norm: max column absolute sum.
inline double induced_l1_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

/// Flip each column so its largest-magnitude entry is positive; ties go to the lowest index.
inline void canonicalize_signs(Matrix& u) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < u.rows(); ++i)
      if (std::abs(u(i, j)) > std::abs(u(best, j))) best = i;
    if (u(best, j) < 0.0) u.col(j) *= -1.0;
  }
}

}  // namespace linalg
}  // namespace spectral_hmm
