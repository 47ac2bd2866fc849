#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/linalg.hpp"
#include "spectral_hmm/moments.hpp"

namespace spectral_hmm {

/// Observable-operator representation (U, b1, binf, {B_x}) of a rank-m model.
///
/// Joint probabilities are binf^T B_{x_t} ... B_{x_1} b1. Symbols without a
/// stored operator use the zero matrix.
struct ObservableModel {
  std::size_t m = 0;
  std::size_t n = 0;
  Matrix U;                  // n x m, orthonormal columns
  Vector b1;                 // m
  Vector binf;               // m
  std::map<Symbol, Matrix> B;
  Vector svals;              // full singular spectrum of the P21 the model was learned from
  bool degenerate_rank = false;

  /// B_x, or the zero matrix for a symbol without a stored operator.
  Matrix op(Symbol x) const {
    auto it = B.find(x);
    return it != B.end() ? it->second : Matrix::Zero(m, m);
  }

  /// B_x v without materializing zero operators.
  Vector apply(Symbol x, const Vector& v) const {
    auto it = B.find(x);
    return it != B.end() ? Vector(it->second * v) : Vector::Zero(m);
  }
};

struct SubspaceResult {
  Matrix U;       // n x m
  Vector svals;   // all singular values, nonincreasing
  bool degenerate_rank = false;  // sigma_m at or below the rank tolerance
};

/// Left singular vectors for the m largest singular values of P21, with
/// column signs fixed so each column's largest-magnitude entry is positive.
inline SubspaceResult truncated_svd_u(const Matrix& P21, std::size_t m) {
  const auto mi = static_cast<Eigen::Index>(m);
  if (mi < 1 || mi > std::min(P21.rows(), P21.cols()))
    throw DomainError("rank m must satisfy 1 <= m <= n");
  Eigen::JacobiSVD<Matrix> svd(P21, Eigen::ComputeFullU);
  SubspaceResult r;
  r.svals = svd.singularValues();
  r.U = svd.matrixU().leftCols(mi);
  linalg::canonicalize_signs(r.U);
  r.degenerate_rank =
      !(r.svals(mi - 1) > linalg::rank_tolerance(P21.rows(), P21.cols(), r.svals(0)));
  return r;
}

/// Raised when U^T P21 is numerically rank deficient.
class IllConditionedMoments : public NumericError {
 public:
  IllConditionedMoments(std::size_t m, Vector svals)
      : NumericError(describe(m, svals)), svals_(std::move(svals)) {}

  const Vector& svals() const { return svals_; }

 private:
  static std::string describe(std::size_t m, const Vector& s) {
    std::ostringstream os;
    os << "moments are ill-conditioned for rank " << m << ": singular values of U^T P21 =";
    for (Eigen::Index i = 0; i < s.size(); ++i) os << ' ' << s(i);
    return os.str();
  }
  Vector svals_;
};

/// Spectral learning from moments:
///   b1 = U^T P1,  binf = (P21^T U)^+ P1,  B_x = U^T P3x (U^T P21)^+.
inline ObservableModel learn(const MomentEstimates& moments, std::size_t m) {
  check_shapes(moments);
  SubspaceResult sub = truncated_svd_u(moments.P21, m);

  const Matrix UtP21 = sub.U.transpose() * moments.P21;
  const Vector s = linalg::singular_values(UtP21);
  if (!(s(s.size() - 1) > linalg::rank_tolerance(UtP21.rows(), UtP21.cols(), s(0))))
    throw IllConditionedMoments(m, s);

  ObservableModel model;
  model.m = m;
  model.n = moments.n;
  model.svals = sub.svals;
  model.degenerate_rank = sub.degenerate_rank;
  model.b1 = sub.U.transpose() * moments.P1;
  model.binf = linalg::pinv(moments.P21.transpose() * sub.U) * moments.P1;
  const Matrix right = linalg::pinv(UtP21);
  for (const auto& [x, table] : moments.P3) model.B.emplace(x, sub.U.transpose() * table * right);
  model.U = std::move(sub.U);
  return model;
}

/// Singular spectrum of P21, for choosing m by eye.
inline Vector singular_spectrum(const MomentEstimates& moments) {
  return linalg::singular_values(moments.P21);
}

/// Raised when U^T O is singular (the subspace misses part of range(O)).
struct NotInvertible : NumericError {
  explicit NotInvertible(double sigma)
      : NumericError("U^T O is not invertible (sigma_m = " + std::to_string(sigma) + ")") {}
};

namespace detail {

inline Matrix checked_UtO(const HmmParams& params, const Matrix& U) {
  check_dimensions(params);
  if (U.rows() != static_cast<Eigen::Index>(params.n()) || U.cols() != static_cast<Eigen::Index>(params.m()))
    throw StructuralError("subspace U must be n x m");
  const Matrix UtO = U.transpose() * params.O;
  const Vector s = linalg::singular_values(UtO);
  if (!(s(s.size() - 1) > linalg::rank_tolerance(UtO.rows(), UtO.cols(), s(0))))
    throw NotInvertible(s(s.size() - 1));
  return UtO;
}

}  // namespace detail

/// The exact observable parameters for subspace U, built from the factored forms
///   b1 = (U^T O) pi,  binf = (U^T O)^{-T} 1,  B_x = (U^T O) A_x (U^T O)^{-1}.
inline ObservableModel exact_observable_model(const HmmParams& params, const Matrix& U) {
  const Matrix UtO = detail::checked_UtO(params, U);
  const Eigen::PartialPivLU<Matrix> lu(UtO);
  const auto m = static_cast<Eigen::Index>(params.m());

  ObservableModel model;
  model.m = params.m();
  model.n = params.n();
  model.U = U;
  model.svals = linalg::singular_values(true_moments(params).P21);
  model.b1 = UtO * params.pi;
  model.binf = lu.transpose().solve(Vector::Ones(m));
  const Matrix inv = lu.inverse();
  for (Symbol x = 0; x < params.n(); ++x)
    model.B.emplace(x, UtO * observation_operator(params, x) * inv);
  return model;
}

struct ParameterErrorReport {
  double delta1 = 0.0;     // ||(U^T O)^{-1} b1 - pi||_1
  double delta_inf = 0.0;  // ||(U^T O)^T binf - 1||_inf
  std::map<Symbol, double> Delta_x;  // ||(U^T O)^{-1} B_x (U^T O) - A_x||_1 (induced)
  double Delta = 0.0;
  double sigma_m_UO = 0.0;
};

/// Parameter errors of a model against the true HMM, measured in the basis U^T O.
inline ParameterErrorReport parameter_errors(const ObservableModel& model, const HmmParams& params) {
  const Matrix UtO = detail::checked_UtO(params, model.U);
  const Eigen::PartialPivLU<Matrix> lu(UtO);
  const auto m = static_cast<Eigen::Index>(params.m());

  ParameterErrorReport r;
  r.sigma_m_UO = linalg::sigma_k(UtO, m);
  r.delta1 = (lu.solve(model.b1) - params.pi).lpNorm<1>();
  r.delta_inf = (UtO.transpose() * model.binf - Vector::Ones(m)).lpNorm<Eigen::Infinity>();
  for (Symbol x = 0; x < params.n(); ++x) {
    const Matrix analysed = lu.solve(model.op(x) * UtO);
    const double d = linalg::induced_l1_norm(analysed - observation_operator(params, x));
    r.Delta_x[x] = d;
    r.Delta += d;
  }
  return r;
}

}  // namespace spectral_hmm
