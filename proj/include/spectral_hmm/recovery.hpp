#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/learner.hpp"
#include "spectral_hmm/linalg.hpp"
#include "spectral_hmm/moments.hpp"
#include "spectral_hmm/random.hpp"

namespace spectral_hmm {

struct RecoveryResiduals {
  double max_imag_discarded = 0.0;    // largest imaginary part dropped from eigenvalues/vectors
  double min_eigen_gap = 0.0;         // smallest pairwise eigenvalue distance of the mixed operator
  double max_offdiag_residual = 0.0;  // largest off-diagonal entry after per-symbol conjugation
  double stochasticity_defect = 0.0;  // largest column-sum or sign defect in O, T, pi
};

struct RecoveredHmm {
  HmmParams params;
  RecoveryResiduals residuals;
  std::vector<std::size_t> permutation;  // permutation[new_state] = eigenvector index
};

struct RecoveryOptions {
  /// Eigenvalue separation below this fraction of the spectral scale is rejected.
  double min_relative_gap = 1e-4;
  /// Imaginary parts below this fraction of the spectral scale are discarded.
  double imag_tolerance = 1e-8;
  /// Clip negatives to zero and renormalize columns after recovery.
  bool project_stochastic = false;
};

/// Eigenvalues of the random combination were too close to separate states.
class SeparationError : public InstabilityError {
 public:
  explicit SeparationError(double gap)
      : InstabilityError("eigenvalues of the mixed operator are not separated (min gap " +
                         std::to_string(gap) + "); retry with another seed"),
        gap_(gap) {}

  double min_gap() const { return gap_; }

 private:
  double gap_;
};

namespace detail {

inline double stochasticity_defect(const HmmParams& p) {
  double defect = 0.0;
  auto scan = [&defect](const Matrix& a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      defect = std::max(defect, std::abs(a.col(j).sum() - 1.0));
      defect = std::max(defect, -a.col(j).minCoeff());
    }
  };
  scan(p.O);
  scan(p.T);
  scan(p.pi);
  return defect;
}

inline void project_columns(Matrix& a) {
  a = a.cwiseMax(0.0);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double s = a.col(j).sum();
    if (s > 0.0) a.col(j) /= s;
  }
}

/// Relabel states: new state k is old state perm[k].
inline HmmParams permute_states(const HmmParams& p, const std::vector<std::size_t>& perm) {
  const auto m = static_cast<Eigen::Index>(perm.size());
  HmmParams out{Matrix(m, m), Matrix(p.O.rows(), m), Vector(m)};
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto oa = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(a)]);
    out.O.col(a) = p.O.col(oa);
    out.pi(a) = p.pi(oa);
    for (Eigen::Index b = 0; b < m; ++b)
      out.T(a, b) = p.T(oa, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(b)]));
  }
  return out;
}

}  // namespace detail

/// Explicit (O, T, pi) from moments: eigen-decompose a random Gaussian
/// combination of the per-symbol operators (U^T P3x)(U^T P31)^+, read O off the
/// diagonals in that eigenbasis, then pi = O^+ P1 and T = O^+ P21 (O^+)^T diag(pi)^{-1}.
inline RecoveredHmm recover(const MomentEstimates& moments, std::size_t m, std::uint64_t seed,
                            const RecoveryOptions& options = {}) {
  check_shapes(moments);
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(moments.n);
  const Matrix U = truncated_svd_u(moments.P21, m).U;

  const Matrix UtP31 = U.transpose() * moments.p31();
  const Vector s31 = linalg::singular_values(UtP31);
  if (!(s31(mi - 1) > linalg::rank_tolerance(UtP31.rows(), UtP31.cols(), s31(0))))
    throw NumericError("U^T P31 is rank deficient (sigma_m = " + std::to_string(s31(mi - 1)) + ")");
  const Matrix right = linalg::pinv(UtP31);

  std::vector<Matrix> per_symbol(moments.n);
  Rng rng(seed);
  Matrix mixed = Matrix::Zero(mi, mi);
  for (Symbol x = 0; x < moments.n; ++x) {
    per_symbol[x] = U.transpose() * moments.p3(x) * right;
    mixed += rng.normal() * per_symbol[x];
  }

  RecoveredHmm out;
  const Eigen::EigenSolver<Matrix> eig(mixed);
  if (eig.info() != Eigen::Success) throw InstabilityError("eigen-decomposition did not converge");
  const Eigen::VectorXcd lambda = eig.eigenvalues();
  const Eigen::MatrixXcd vectors = eig.eigenvectors();

  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const double imag_eigen = lambda.imag().cwiseAbs().maxCoeff();
  if (imag_eigen > options.imag_tolerance * scale)
    throw InstabilityError("mixed operator has complex eigenvalues (max imaginary part " +
                           std::to_string(imag_eigen) + ")");

  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < mi; ++i)
    for (Eigen::Index j = i + 1; j < mi; ++j) gap = std::min(gap, std::abs(lambda(i) - lambda(j)));
  out.residuals.min_eigen_gap = mi > 1 ? gap : 0.0;
  if (mi > 1 && gap < options.min_relative_gap * scale) throw SeparationError(gap);

  Matrix basis = vectors.real();
  for (Eigen::Index j = 0; j < mi; ++j) {
    const double norm = vectors.col(j).norm();
    const double imag = vectors.col(j).imag().norm() / (norm > 0.0 ? norm : 1.0);
    out.residuals.max_imag_discarded = std::max(out.residuals.max_imag_discarded, imag);
  }
  out.residuals.max_imag_discarded = std::max(out.residuals.max_imag_discarded, imag_eigen);

  const Eigen::PartialPivLU<Matrix> lu(basis);
  Matrix O(ni, mi);
  for (Symbol x = 0; x < moments.n; ++x) {
    const Matrix diag = lu.solve(per_symbol[x] * basis);
    const auto xi = static_cast<Eigen::Index>(x);
    O.row(xi) = diag.diagonal().transpose();
    Matrix off = diag;
    off.diagonal().setZero();
    if (off.size() > 0)
      out.residuals.max_offdiag_residual =
          std::max(out.residuals.max_offdiag_residual, off.cwiseAbs().maxCoeff());
  }

  const Matrix O_pinv = linalg::pinv(O);
  const Vector pi = O_pinv * moments.P1;
  if (!(pi.cwiseAbs().minCoeff() > 0.0)) throw NumericError("recovered initial distribution has a zero entry");
  const Matrix T = O_pinv * moments.P21 * O_pinv.transpose() * pi.cwiseInverse().asDiagonal();

  // Canonical order: first row of O descending, then second row.
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&O](std::size_t a, std::size_t b) {
    const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
    if (O(0, ia) != O(0, ib)) return O(0, ia) > O(0, ib);
    if (O.rows() > 1) return O(1, ia) > O(1, ib);
    return false;
  });
  out.permutation = perm;
  out.params = detail::permute_states(HmmParams{T, O, pi}, perm);
  out.residuals.stochasticity_defect = detail::stochasticity_defect(out.params);

  if (options.project_stochastic) {
    detail::project_columns(out.params.O);
    detail::project_columns(out.params.T);
    Matrix p = out.params.pi;
    detail::project_columns(p);
    out.params.pi = p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment

namespace detail {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(m^3)). Returns assignment[row] = column.
inline std::vector<std::size_t> min_cost_assignment(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace detail

struct Alignment {
  std::vector<std::size_t> permutation;  // permutation[reference_state] = recovered state
  HmmParams aligned;                     // recovered params relabeled into the reference order
  double max_deviation = 0.0;            // max elementwise |aligned - reference| over O, T, pi
};

/// Match recovered states to reference states by minimum total L1 distance
/// between O columns.
inline Alignment align_permutation(const HmmParams& recovered, const HmmParams& reference) {
  check_dimensions(recovered);
  check_dimensions(reference);
  if (recovered.m() != reference.m() || recovered.n() != reference.n())
    throw StructuralError("cannot align HMMs of different shapes");
  const auto m = static_cast<Eigen::Index>(reference.m());
  Matrix cost(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) cost(i, j) = (reference.O.col(i) - recovered.O.col(j)).lpNorm<1>();

  Alignment a;
  a.permutation = detail::min_cost_assignment(cost);
  a.aligned = detail::permute_states(recovered, a.permutation);
  a.max_deviation = std::max({(a.aligned.O - reference.O).cwiseAbs().maxCoeff(),
                              (a.aligned.T - reference.T).cwiseAbs().maxCoeff(),
                              (a.aligned.pi - reference.pi).cwiseAbs().maxCoeff()});
  return a;
}

}  // namespace spectral_hmm
