#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the library's inference or moment routines; only the HmmParams struct and
// plain loops are used.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "spectral_hmm/hmm.hpp"

namespace oracle {

using spectral_hmm::HmmParams;
using spectral_hmm::Matrix;
using spectral_hmm::Sequence;
using spectral_hmm::Symbol;
using spectral_hmm::Vector;

/// Pr[x_1..x_t] by summing over every hidden path.
inline double path_sum_joint(const HmmParams& p, const Sequence& seq) {
  const std::size_t m = p.m(), t = seq.size();
  if (t == 0) return 1.0;
  std::vector<std::size_t> h(t, 0);
  double total = 0.0;
  while (true) {
    double prob = p.pi(static_cast<Eigen::Index>(h[0]));
    for (std::size_t s = 0; s < t; ++s) {
      prob *= p.O(static_cast<Eigen::Index>(seq[s]), static_cast<Eigen::Index>(h[s]));
      if (s + 1 < t) prob *= p.T(static_cast<Eigen::Index>(h[s + 1]), static_cast<Eigen::Index>(h[s]));
    }
    total += prob;
    std::size_t k = 0;
    while (k < t && ++h[k] == m) h[k++] = 0;
    if (k == t) break;
  }
  return total;
}

/// Every length-t sequence over n symbols.
inline std::vector<Sequence> all_sequences(std::size_t n, std::size_t t) {
  std::vector<Sequence> out;
  Sequence s(t, 0);
  while (true) {
    out.push_back(s);
    std::size_t k = 0;
    while (k < t && ++s[k] == n) s[k++] = 0;
    if (k == t) break;
  }
  return out;
}

/// Pr[h_t = . | x_{1:t-1}] by Bayes' rule on the path-sum joint:
/// Pr[h_t = i, x_{1:t-1}] computed with explicit loops, then normalized.
inline Vector posterior(const HmmParams& p, const Sequence& history) {
  const std::size_t m = p.m();
  std::vector<double> alpha(m);
  for (std::size_t i = 0; i < m; ++i) alpha[i] = p.pi(static_cast<Eigen::Index>(i));
  for (Symbol x : history) {
    std::vector<double> next(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        next[i] += p.T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                   p.O(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(j)) * alpha[j];
    alpha = next;
  }
  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  Vector h(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) h(static_cast<Eigen::Index>(i)) = alpha[i] / total;
  return h;
}

/// [P21]_{ij} = Pr[x2 = i, x1 = j] by length-2 enumeration.
inline Matrix pair_table(const HmmParams& p) {
  const auto n = static_cast<Eigen::Index>(p.n());
  Matrix out = Matrix::Zero(n, n);
  for (Symbol a = 0; a < p.n(); ++a)
    for (Symbol b = 0; b < p.n(); ++b)
      out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = path_sum_joint(p, {a, b});
  return out;
}

/// [P31]_{ij} = Pr[x3 = i, x1 = j] by length-3 enumeration.
inline Matrix skip_table(const HmmParams& p) {
  const auto n = static_cast<Eigen::Index>(p.n());
  Matrix out = Matrix::Zero(n, n);
  for (const auto& s : all_sequences(p.n(), 3))
    out(static_cast<Eigen::Index>(s[2]), static_cast<Eigen::Index>(s[0])) += path_sum_joint(p, s);
  return out;
}

/// Largest singular value by power iteration on A^T A.
inline double power_norm(const Matrix& a, int iterations = 5000) {
  Vector v = Vector::Ones(a.cols()).normalized();
  double sigma = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vector w = a.transpose() * (a * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

/// Smallest singular value of a tall matrix via the eigenvalues of A^T A.
inline double min_singular_value(const Matrix& a) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(a.transpose() * a);
  return std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
}

/// Minimum assignment cost by trying every permutation.
inline double exhaustive_assignment_cost(const Matrix& cost) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(cost.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      c += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
