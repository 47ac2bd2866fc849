#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/linalg.hpp"
#include "spectral_hmm/moments.hpp"
#include "spectral_hmm/random.hpp"

namespace spectral_hmm {

/// Ground-truth HMM over m hidden states and n symbols.
///   T(i, j)  = Pr[h_{t+1} = i | h_t = j]
///   O(x, j)  = Pr[x_t = x | h_t = j]
///   pi(i)    = Pr[h_1 = i]
struct HmmParams {
  Matrix T;
  Matrix O;
  Vector pi;

  std::size_t m() const { return static_cast<std::size_t>(T.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(O.rows()); }
};

using Sequence = std::vector<Symbol>;
using Triple = std::array<Symbol, 3>;

inline void check_dimensions(const HmmParams& p) {
  const Eigen::Index m = p.T.rows();
  if (m == 0 || p.T.cols() != m || p.O.cols() != m || p.pi.size() != m)
    throw StructuralError("HMM dimensions are inconsistent (T " + std::to_string(p.T.rows()) + "x" +
                          std::to_string(p.T.cols()) + ", O " + std::to_string(p.O.rows()) + "x" +
                          std::to_string(p.O.cols()) + ", pi " + std::to_string(p.pi.size()) + ")");
  if (p.O.rows() < 1) throw StructuralError("HMM must have at least one symbol");
}

inline void check_symbol(const HmmParams& p, Symbol x) {
  if (x >= p.n())
    throw DomainError("symbol " + std::to_string(x + 1) + " outside alphabet of size " +
                      std::to_string(p.n()));
}

/// Raised when conditioning on a history the model gives zero probability.
class ZeroProbabilityHistory : public Error {
 public:
  ZeroProbabilityHistory(std::size_t position, Symbol symbol, ErrorKind kind = ErrorKind::domain)
      : Error(kind, "history has zero probability at position " + std::to_string(position + 1) +
                        " (symbol " + std::to_string(symbol + 1) + ")"),
        position_(position),
        symbol_(symbol) {}

  /// 0-based index of the failing observation.
  std::size_t position() const { return position_; }
  Symbol symbol() const { return symbol_; }

 private:
  std::size_t position_;
  Symbol symbol_;
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  std::vector<std::string> violations;
  double sigma_m_O = 0.0;
  double sigma_m_T = 0.0;
  std::size_t rank_T = 0;
  bool rank_checked = false;

  bool ok() const { return violations.empty(); }
};

namespace detail {

inline void check_stochastic_columns(const Matrix& a, const char* name,
                                     std::vector<std::string>& out) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const auto col = a.col(j);
    if (col.minCoeff() < 0.0 || col.maxCoeff() > 1.0)
      out.push_back(std::string(name) + " column " + std::to_string(j + 1) + " has entries outside [0,1]");
    if (std::abs(col.sum() - 1.0) > 1e-12)
      out.push_back(std::string(name) + " column " + std::to_string(j + 1) + " does not sum to 1");
  }
}

}  // namespace detail

/// Stochasticity checks and, with `require_rank`, the rank condition on O and T.
inline ValidationReport validate(const HmmParams& p, bool require_rank) {
  check_dimensions(p);
  ValidationReport r;
  detail::check_stochastic_columns(p.T, "T", r.violations);
  detail::check_stochastic_columns(p.O, "O", r.violations);
  detail::check_stochastic_columns(p.pi, "pi", r.violations);

  const auto m = static_cast<Eigen::Index>(p.m());
  const Vector so = linalg::singular_values(p.O);
  const Vector st = linalg::singular_values(p.T);
  r.sigma_m_O = so(m - 1);
  r.sigma_m_T = st(m - 1);
  r.rank_T = static_cast<std::size_t>(linalg::numerical_rank(p.T));

  if (require_rank) {
    r.rank_checked = true;
    if (!(r.sigma_m_O > linalg::rank_tolerance(p.O.rows(), p.O.cols(), so(0))))
      r.violations.push_back("O is not rank m (sigma_m(O) = " + std::to_string(r.sigma_m_O) + ")");
    if (!(r.sigma_m_T > linalg::rank_tolerance(m, m, st(0))))
      r.violations.push_back("T is not rank m (sigma_m(T) = " + std::to_string(r.sigma_m_T) + ")");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Exact inference

/// A_x = T diag(O(x, .)).
inline Matrix observation_operator(const HmmParams& p, Symbol x) {
  check_symbol(p, x);
  return p.T * p.O.row(x).transpose().asDiagonal();
}

/// Pr[x_1..x_t] = 1^T A_{x_t} ... A_{x_1} pi.
inline double joint_prob_exact(const HmmParams& p, std::span<const Symbol> seq) {
  check_dimensions(p);
  if (seq.empty()) throw DomainError("joint probability of an empty sequence");
  Vector state = p.pi;
  for (Symbol x : seq) {
    check_symbol(p, x);
    state = p.T * (p.O.row(x).transpose().cwiseProduct(state));
  }
  return state.sum();
}

/// Predictive hidden-state distribution Pr[h_t = . | x_{1:t-1}] by the normalized
/// forward recursion. Empty history gives pi.
inline Vector forward_posterior(const HmmParams& p, std::span<const Symbol> history) {
  check_dimensions(p);
  Vector h = p.pi;
  for (std::size_t s = 0; s < history.size(); ++s) {
    check_symbol(p, history[s]);
    Vector next = p.T * (p.O.row(history[s]).transpose().cwiseProduct(h));
    const double mass = next.sum();
    if (!(mass > 0.0)) throw ZeroProbabilityHistory(s, history[s]);
    h = next / mass;
  }
  return h;
}

/// Pr[x_t = . | x_{1:t-1}] = O h_t.
inline Vector conditional_next_exact(const HmmParams& p, std::span<const Symbol> history) {
  return p.O * forward_posterior(p, history);
}

// ---------------------------------------------------------------------------
// Sampling

/// Inverse-CDF sampler over the columns of T, O and over pi.
class HmmSampler {
 public:
  explicit HmmSampler(const HmmParams& p) : pi_cdf_(cdf(p.pi)) {
    check_dimensions(p);
    for (Eigen::Index j = 0; j < p.T.cols(); ++j) t_cdf_.push_back(cdf(p.T.col(j)));
    for (Eigen::Index j = 0; j < p.O.cols(); ++j) o_cdf_.push_back(cdf(p.O.col(j)));
  }

  std::size_t initial(Rng& rng) const { return draw(pi_cdf_, rng); }
  std::size_t transition(std::size_t state, Rng& rng) const { return draw(t_cdf_[state], rng); }
  Symbol emit(std::size_t state, Rng& rng) const { return draw(o_cdf_[state], rng); }

 private:
  // Cumulative sums with the last entry pinned to exactly 1.
  static std::vector<double> cdf(const Vector& col) {
    std::vector<double> c(static_cast<std::size_t>(col.size()));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) c[static_cast<std::size_t>(i)] = acc += col(i);
    for (auto& v : c) v /= acc;
    c.back() = 1.0;
    return c;
  }

  static std::size_t draw(const std::vector<double>& c, Rng& rng) {
    const double u = rng.uniform();
    return static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
  }

  std::vector<double> pi_cdf_;
  std::vector<std::vector<double>> t_cdf_;
  std::vector<std::vector<double>> o_cdf_;
};

namespace detail {

inline void sample_triples_into(const HmmSampler& sampler, std::size_t count, std::uint64_t seed,
                                std::span<Triple> out) {
  Rng rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t h = sampler.initial(rng);
    Triple& t = out[k];
    t[0] = sampler.emit(h, rng);
    h = sampler.transition(h, rng);
    t[1] = sampler.emit(h, rng);
    h = sampler.transition(h, rng);
    t[2] = sampler.emit(h, rng);
  }
}

}  // namespace detail

/// N independent triples (x1, x2, x3), each the first three observations of a
/// fresh run. With shards > 1 the count is split evenly across workers seeded
/// seed + shard index and the results concatenated in shard order, so the
/// output depends on (seed, shards) but not on thread scheduling.
inline std::vector<Triple> sample_triples(const HmmParams& p, std::size_t N, std::uint64_t seed,
                                          std::size_t shards = 1) {
  if (N == 0) throw DomainError("triple count must be positive");
  const HmmSampler sampler(p);
  std::vector<Triple> out(N);
  shards = std::clamp<std::size_t>(shards, 1, N);
  if (shards == 1) {
    detail::sample_triples_into(sampler, N, seed, out);
    return out;
  }
  std::vector<std::thread> workers;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t count = N / shards + (s < N % shards ? 1 : 0);
    std::span<Triple> slice(out.data() + offset, count);
    workers.emplace_back([&sampler, count, seed, s, slice] {
      detail::sample_triples_into(sampler, count, seed + s, slice);
    });
    offset += count;
  }
  for (auto& w : workers) w.join();
  return out;
}

/// Accumulate N sampled triples without materializing them.
inline TripleAccumulator sample_moment_counts(const HmmParams& p, std::size_t N, std::uint64_t seed) {
  if (N == 0) throw DomainError("triple count must be positive");
  const HmmSampler sampler(p);
  TripleAccumulator acc(p.n());
  Rng rng(seed);
  for (std::size_t k = 0; k < N; ++k) {
    std::size_t h = sampler.initial(rng);
    const Symbol x1 = sampler.emit(h, rng);
    h = sampler.transition(h, rng);
    const Symbol x2 = sampler.emit(h, rng);
    h = sampler.transition(h, rng);
    acc.ingest(x1, x2, sampler.emit(h, rng));
  }
  return acc;
}

/// One length-t observation sequence.
inline Sequence sample_sequence(const HmmParams& p, std::size_t t, std::uint64_t seed) {
  if (t == 0) throw DomainError("sequence length must be positive");
  const HmmSampler sampler(p);
  Rng rng(seed);
  Sequence seq(t);
  std::size_t h = sampler.initial(rng);
  for (std::size_t s = 0; s < t; ++s) {
    if (s > 0) h = sampler.transition(h, rng);
    seq[s] = sampler.emit(h, rng);
  }
  return seq;
}

/// Draws a stream of sequences from one generator (used by Monte Carlo evaluators).
class SequenceSampler {
 public:
  SequenceSampler(const HmmParams& p, std::uint64_t seed) : sampler_(p), rng_(seed) {}

  Sequence next(std::size_t t) {
    Sequence seq(t);
    std::size_t h = sampler_.initial(rng_);
    for (std::size_t s = 0; s < t; ++s) {
      if (s > 0) h = sampler_.transition(h, rng_);
      seq[s] = sampler_.emit(h, rng_);
    }
    return seq;
  }

 private:
  HmmSampler sampler_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Moments

/// Analytic moments from the factored forms
///   P1 = O pi,  P21 = O T diag(pi) O^T,  P3x = O A_x T diag(pi) O^T.
inline MomentEstimates true_moments(const HmmParams& p) {
  check_dimensions(p);
  MomentEstimates est;
  est.n = p.n();
  est.N = 0;
  est.P1 = p.O * p.pi;
  const Matrix tail = p.T * p.pi.asDiagonal() * p.O.transpose();
  est.P21 = p.O * tail;
  for (Symbol x = 0; x < p.n(); ++x) est.P3.emplace(x, p.O * observation_operator(p, x) * tail);
  return est;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct SpectralDiagnostics {
  double sigma_m_O = 0.0;
  double sigma_m_P21 = 0.0;
  double gamma_lower = 0.0;     // sigma_m(O) / sqrt(n)
  double gamma_estimate = 0.0;  // achieved value of ||O v||_1 on the L1 sphere; >= gamma
  double alpha = 0.0;           // min entry over all A_x
  std::map<double, std::size_t> n0_table;
};

inline constexpr std::array<double, 6> kN0Grid = {0.5, 0.2, 0.1, 0.05, 0.01, 0.001};

namespace detail {

/// Euclidean projection onto the probability simplex.
inline Vector project_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumulative += u[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u[k] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

/// Upper estimate of inf_{||v||_1 = 1} ||O v||_1. Each restart fixes a random
/// sign pattern s (one face of the L1 sphere) and runs projected subgradient
/// descent on ||O diag(s) w||_1 over the simplex. Every evaluated point is
/// feasible, so the returned minimum never undercuts the true infimum.
inline double estimate_gamma(const Matrix& O, std::size_t restarts, std::uint64_t seed) {
  const Eigen::Index m = O.cols();
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m; ++j) best = std::min(best, O.col(j).lpNorm<1>());

  Rng rng(seed);
  constexpr int kIterations = 400;
  for (std::size_t r = 0; r < restarts; ++r) {
    Vector signs(m), w(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      signs(j) = rng.uniform() < 0.5 ? -1.0 : 1.0;
      w(j) = rng.exponential();
    }
    w /= w.sum();
    const Matrix face = O * signs.asDiagonal();
    for (int k = 0; k < kIterations; ++k) {
      const Vector image = face * w;
      best = std::min(best, image.lpNorm<1>());
      const Vector g = face.transpose() * image.unaryExpr([](double v) {
        return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      });
      const double gn = g.norm();
      if (gn == 0.0) break;
      w = project_simplex(w - (0.5 / std::sqrt(k + 1.0)) * g / gn);
    }
    best = std::min(best, (face * w).lpNorm<1>());
  }
  return best;
}

}  // namespace detail

inline SpectralDiagnostics compute_diagnostics(const HmmParams& p, std::size_t gamma_restarts = 64,
                                               std::uint64_t seed = 0) {
  check_dimensions(p);
  const auto m = static_cast<Eigen::Index>(p.m());
  const MomentEstimates moments = true_moments(p);

  SpectralDiagnostics d;
  d.sigma_m_O = linalg::sigma_k(p.O, m);
  d.sigma_m_P21 = linalg::sigma_k(moments.P21, m);
  d.gamma_lower = d.sigma_m_O / std::sqrt(static_cast<double>(p.n()));
  d.gamma_estimate = detail::estimate_gamma(p.O, gamma_restarts, seed);

  d.alpha = std::numeric_limits<double>::infinity();
  for (Symbol x = 0; x < p.n(); ++x) d.alpha = std::min(d.alpha, observation_operator(p, x).minCoeff());

  const Vector marginal = p.O * p.T * p.pi;  // Pr[x2 = .]
  for (double eps : kN0Grid) d.n0_table[eps] = n0(marginal, eps);
  return d;
}

// ---------------------------------------------------------------------------
// Random instances

namespace detail {

inline Vector dirichlet_flat(Eigen::Index k, Rng& rng) {
  Vector v(k);
  for (Eigen::Index i = 0; i < k; ++i) v(i) = rng.exponential();
  return v / v.sum();
}

}  // namespace detail

inline constexpr int kRandomHmmAttempts = 1000;

/// Columns of T, O and pi from the flat Dirichlet, rejection-resampled until
/// sigma_m(O) >= min_sigma and sigma_m(P21) >= min_sigma.
inline HmmParams random_hmm(std::size_t m, std::size_t n, std::uint64_t seed, double min_sigma) {
  if (m < 1 || m > n) throw DomainError("random_hmm requires 1 <= m <= n");
  if (!(min_sigma >= 0.0)) throw DomainError("min_sigma must be nonnegative");
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  Rng rng(seed);
  std::string failing;
  for (int attempt = 0; attempt < kRandomHmmAttempts; ++attempt) {
    HmmParams p{Matrix(mi, mi), Matrix(ni, mi), Vector(mi)};
    for (Eigen::Index j = 0; j < mi; ++j) p.T.col(j) = detail::dirichlet_flat(mi, rng);
    for (Eigen::Index j = 0; j < mi; ++j) p.O.col(j) = detail::dirichlet_flat(ni, rng);
    p.pi = detail::dirichlet_flat(mi, rng);

    if (linalg::sigma_k(p.O, mi) < min_sigma) {
      failing = "sigma_m(O)";
      continue;
    }
    const Matrix p21 = p.O * p.T * p.pi.asDiagonal() * p.O.transpose();
    if (linalg::sigma_k(p21, mi) < min_sigma) {
      failing = "sigma_m(P21)";
      continue;
    }
    return p;
  }
  throw NumericError("random_hmm: no instance with " + failing + " >= " + std::to_string(min_sigma) +
                     " after " + std::to_string(kRandomHmmAttempts) + " attempts");
}

}  // namespace spectral_hmm
