#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/linalg.hpp"

namespace spectral_hmm {

// Every pair/triple table is stored [later symbol][earlier symbol]:
//   P21(i, j)    = Pr[x2 = i, x1 = j]
//   P3.at(x)(i, j) = Pr[x3 = i, x2 = x, x1 = j]

/// Low-order moments of the observation process: P1, P21 and the P3 tables
/// keyed by the middle symbol. Middle symbols missing from `P3` have an
/// implicit zero table. `N == 0` marks analytic (exact) moments.
struct MomentEstimates {
  std::size_t n = 0;
  std::uint64_t N = 0;
  Vector P1;
  Matrix P21;
  std::map<Symbol, Matrix> P3;

  bool analytic() const { return N == 0; }

  /// P3 table for middle symbol x (a zero matrix when x was never observed).
  Matrix p3(Symbol x) const {
    auto it = P3.find(x);
    return it != P3.end() ? it->second : Matrix::Zero(n, n);
  }

  /// P31(i, j) = Pr[x3 = i, x1 = j], the sum of all P3 tables.
  Matrix p31() const {
    Matrix sum = Matrix::Zero(n, n);
    for (const auto& [x, table] : P3) sum += table;
    return sum;
  }

  /// Pr[x2 = .] read off P21.
  Vector middle_marginal() const { return P21.rowwise().sum(); }
};

/// Throws StructuralError when table shapes disagree with `n`.
inline void check_shapes(const MomentEstimates& est) {
  const auto n = static_cast<Eigen::Index>(est.n);
  if (est.P1.size() != n || est.P21.rows() != n || est.P21.cols() != n)
    throw StructuralError("moment tables do not match alphabet size " + std::to_string(est.n));
  for (const auto& [x, table] : est.P3) {
    if (x >= est.n || table.rows() != n || table.cols() != n)
      throw StructuralError("P3 table for symbol " + std::to_string(x + 1) + " has the wrong shape");
  }
}

/// Exact count tables over observation triples. Single writer; combine shards with merge().
class TripleAccumulator {
 public:
  using Counts = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic>;
  using CountVector = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 1>;

  explicit TripleAccumulator(std::size_t n)
      : n_(n), c1_(CountVector::Zero(n)), c21_(Counts::Zero(n, n)) {}

  void ingest(Symbol x1, Symbol x2, Symbol x3) {
    if (x1 >= n_ || x2 >= n_ || x3 >= n_)
      throw DomainError("triple symbol out of range for alphabet size " + std::to_string(n_));
    ++count_;
    ++c1_(x1);
    ++c21_(x2, x1);
    auto [it, inserted] = c3_.try_emplace(x2);
    if (inserted) it->second = Counts::Zero(n_, n_);
    ++it->second(x3, x1);
  }

  std::size_t n() const { return n_; }
  std::uint64_t count() const { return count_; }
  const CountVector& c1() const { return c1_; }
  const Counts& c21() const { return c21_; }
  const std::map<Symbol, Counts>& c3() const { return c3_; }

  friend TripleAccumulator merge(const TripleAccumulator& a, const TripleAccumulator& b);
  friend bool operator==(const TripleAccumulator&, const TripleAccumulator&) = default;

 private:
  std::size_t n_;
  std::uint64_t count_ = 0;
  CountVector c1_;
  Counts c21_;
  std::map<Symbol, Counts> c3_;
};

inline TripleAccumulator merge(const TripleAccumulator& a, const TripleAccumulator& b) {
  if (a.n_ != b.n_)
    throw StructuralError("cannot merge accumulators over alphabets " + std::to_string(a.n_) +
                          " and " + std::to_string(b.n_));
  TripleAccumulator out = a;
  out.count_ += b.count_;
  out.c1_ += b.c1_;
  out.c21_ += b.c21_;
  for (const auto& [x, counts] : b.c3_) {
    auto [it, inserted] = out.c3_.try_emplace(x, counts);
    if (!inserted) it->second += counts;
  }
  return out;
}

/// Divide every count table by N.
inline MomentEstimates finalize(const TripleAccumulator& acc) {
  if (acc.count() == 0) throw DomainError("cannot finalize an empty accumulator");
  const double total = static_cast<double>(acc.count());
  MomentEstimates est;
  est.n = acc.n();
  est.N = acc.count();
  est.P1 = acc.c1().cast<double>() / total;
  est.P21 = acc.c21().cast<double>() / total;
  for (const auto& [x, counts] : acc.c3()) est.P3.emplace(x, counts.cast<double>() / total);
  return est;
}

// ---------------------------------------------------------------------------
// Sampling error

/// epsilon(k): the smallest total mass of any n - k symbols under `marginal`.
inline double epsilon_k(const Vector& marginal, std::size_t k) {
  std::vector<double> p(marginal.data(), marginal.data() + marginal.size());
  std::sort(p.begin(), p.end());
  const std::size_t keep = k >= p.size() ? 0 : p.size() - k;
  return std::accumulate(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
}

/// n0(eps): the fewest symbols whose complement carries at most eps of the mass.
inline std::size_t n0(const Vector& marginal, double eps) {
  const auto n = static_cast<std::size_t>(marginal.size());
  for (std::size_t k = 0; k <= n; ++k)
    if (epsilon_k(marginal, k) <= eps) return k;
  return n;
}

struct SamplingBounds {
  double bound_eps1 = 0.0;
  double bound_eps21 = 0.0;
  double bound_eps3_max = 0.0;
  double bound_eps3_sum = 0.0;
  std::size_t best_k = 0;  // minimizer in the eps3_sum bound
};

struct SamplingErrorReport {
  double eps1 = 0.0;
  double eps21 = 0.0;
  double eps3_max = 0.0;
  double eps3_sum = 0.0;
  SamplingBounds bounds;  // filled by sampling_errors(est, truth, eta)

  /// True when every measured error sits at or below its bound.
  bool within_bounds() const {
    return eps1 <= bounds.bound_eps1 && eps21 <= bounds.bound_eps21 &&
           eps3_max <= bounds.bound_eps3_max && eps3_sum <= bounds.bound_eps3_sum;
  }
};

/// High-probability bounds on the sampling errors after N triples.
/// `marginal` is Pr[x2 = .]; each inequality uses the ln(3/eta) constant.
inline SamplingBounds theoretical_bounds(std::uint64_t N, double eta, const Vector& marginal) {
  if (N == 0) throw DomainError("sample count must be positive");
  if (!(eta > 0.0 && eta < 1.0)) throw DomainError("eta must lie in (0, 1)");
  if (marginal.size() == 0 || marginal.minCoeff() < 0.0 || std::abs(marginal.sum() - 1.0) > 1e-9)
    throw DomainError("marginal must be a probability vector");

  const double inv_n = 1.0 / static_cast<double>(N);
  const double log_term = std::log(3.0 / eta);
  const double base = std::sqrt(inv_n * log_term) + std::sqrt(inv_n);

  SamplingBounds b;
  b.bound_eps1 = b.bound_eps21 = b.bound_eps3_max = base;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= static_cast<std::size_t>(marginal.size()); ++k) {
    const double kd = static_cast<double>(k);
    const double value = std::sqrt(kd * inv_n * log_term) + std::sqrt(kd * inv_n) +
                         2.0 * epsilon_k(marginal, k);
    if (value < best) {
      best = value;
      b.best_k = k;
    }
  }
  b.bound_eps3_sum = best + base;
  return b;
}

/// Spectral-norm deviations of `est` from `truth`.
inline SamplingErrorReport sampling_errors(const MomentEstimates& est, const MomentEstimates& truth) {
  check_shapes(est);
  check_shapes(truth);
  if (est.n != truth.n) throw StructuralError("moment estimates over different alphabets");

  SamplingErrorReport r;
  r.eps1 = (est.P1 - truth.P1).norm();
  r.eps21 = linalg::spectral_norm(est.P21 - truth.P21);

  std::set<Symbol> symbols;
  for (const auto& [x, t] : est.P3) symbols.insert(x);
  for (const auto& [x, t] : truth.P3) symbols.insert(x);
  for (Symbol x : symbols) {
    const double e = linalg::spectral_norm(est.p3(x) - truth.p3(x));
    r.eps3_max = std::max(r.eps3_max, e);
    r.eps3_sum += e;
  }
  return r;
}

/// As above, plus the bounds at (est.N, eta) using the true middle-symbol marginal.
inline SamplingErrorReport sampling_errors(const MomentEstimates& est, const MomentEstimates& truth,
                                           double eta) {
  SamplingErrorReport r = sampling_errors(est, truth);
  r.bounds = theoretical_bounds(est.N, eta, truth.middle_marginal());
  return r;
}

}  // namespace spectral_hmm
