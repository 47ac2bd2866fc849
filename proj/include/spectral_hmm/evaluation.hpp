#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/inference.hpp"
#include "spectral_hmm/learner.hpp"
#include "spectral_hmm/moments.hpp"

namespace spectral_hmm {

enum class EvalMethod { enumeration, monte_carlo };

inline const char* to_string(EvalMethod m) {
  return m == EvalMethod::enumeration ? "enumeration" : "monte-carlo";
}

struct NormalizerStats {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t count = 0;

  void add(double v) {
    min = std::min(min, v);
    max = std::max(max, v);
    sum += v;
    ++count;
  }
  double mean() const { return count > 0 ? sum / static_cast<double>(count) : 0.0; }
};

/// Error measures at horizon t. The L1 joint error uses unclamped model joints;
/// KL uses clamped model conditionals. Standard errors are zero in enumeration mode.
struct EvalReport {
  std::size_t t = 0;
  EvalMethod method = EvalMethod::enumeration;
  std::size_t samples = 0;
  std::optional<double> l1_joint;
  double l1_se = 0.0;
  std::optional<double> kl_conditional;
  double kl_se = 0.0;
  NormalizerStats normalizer;
};

inline constexpr std::uint64_t kEnumerationBudget = 10'000'000;

namespace detail {

/// n^t, saturating at UINT64_MAX.
inline std::uint64_t sequence_count(std::size_t n, std::size_t t) {
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < t; ++i) {
    if (total > std::numeric_limits<std::uint64_t>::max() / n) return std::numeric_limits<std::uint64_t>::max();
    total *= n;
  }
  return total;
}

inline void check_budget(std::size_t n, std::size_t t, std::uint64_t budget) {
  if (sequence_count(n, t) > budget)
    throw DomainError("enumeration of " + std::to_string(n) + "^" + std::to_string(t) +
                      " sequences exceeds the budget; use the Monte Carlo estimator");
}

inline void check_pair(const HmmParams& params, const ObservableModel& model) {
  check_dimensions(params);
  if (model.n != params.n()) throw StructuralError("model and HMM use different alphabets");
}

/// Mean and standard error of the mean.
inline std::pair<double, double> mean_se(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// KL(p || q) with the 0 ln 0 = 0 convention.
inline double kl_divergence(const Vector& p, const Vector& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) kl += p(i) * std::log(p(i) / q(i));
  return kl;
}

}  // namespace detail

/// Sum over all n^t sequences of |Pr - P^r|.
inline EvalReport l1_joint_error_exact(const HmmParams& params, const ObservableModel& model, std::size_t t,
                                       std::uint64_t budget = kEnumerationBudget) {
  detail::check_pair(params, model);
  if (t == 0) throw DomainError("horizon must be positive");
  detail::check_budget(params.n(), t, budget);

  std::vector<Matrix> A(params.n());
  for (Symbol x = 0; x < params.n(); ++x) A[x] = observation_operator(params, x);

  double total = 0.0;
  std::function<void(std::size_t, const Vector&, const Vector&)> walk =
      [&](std::size_t depth, const Vector& alpha, const Vector& b) {
        if (depth == t) {
          total += std::abs(alpha.sum() - model.binf.dot(b));
          return;
        }
        for (Symbol x = 0; x < params.n(); ++x) walk(depth + 1, A[x] * alpha, model.apply(x, b));
      };
  walk(0, params.pi, model.b1);

  EvalReport r;
  r.t = t;
  r.method = EvalMethod::enumeration;
  r.samples = static_cast<std::size_t>(detail::sequence_count(params.n(), t));
  r.l1_joint = total;
  return r;
}

/// Monte Carlo estimate of the L1 joint error: E_{x ~ Pr}[|1 - P^r(x) / Pr(x)|].
inline EvalReport l1_joint_error_mc(const HmmParams& params, const ObservableModel& model, std::size_t t,
                                    std::size_t samples, std::uint64_t seed) {
  detail::check_pair(params, model);
  if (t == 0) throw DomainError("horizon must be positive");
  if (samples == 0) throw DomainError("sample count must be positive");
  SequenceSampler sampler(params, seed);
  std::vector<double> values(samples);
  for (auto& v : values) {
    const Sequence seq = sampler.next(t);
    v = std::abs(1.0 - joint_prob(model, seq) / joint_prob_exact(params, seq));
  }
  const auto [mean, se] = detail::mean_se(values);
  EvalReport r;
  r.t = t;
  r.method = EvalMethod::monte_carlo;
  r.samples = samples;
  r.l1_joint = mean;
  r.l1_se = se;
  return r;
}

/// Monte Carlo conditional KL for every horizon 1..t_max from one set of true
/// trajectories. Each trajectory contributes, at step t, the exact
/// KL(Pr[. | x_{1:t-1}] || P^r[. | x_{1:t-1}]) given its sampled history; the
/// average is an unbiased estimate of the expected log-ratio at step t.
inline std::vector<EvalReport> kl_conditional_curve(const HmmParams& params, const ObservableModel& model,
                                                    std::size_t t_max, std::size_t samples,
                                                    std::uint64_t seed) {
  detail::check_pair(params, model);
  if (t_max == 0) throw DomainError("horizon must be positive");
  if (samples == 0) throw DomainError("sample count must be positive");

  std::vector<std::vector<double>> per_t(t_max, std::vector<double>(samples));
  std::vector<NormalizerStats> norms(t_max);
  SequenceSampler sampler(params, seed);
  for (std::size_t s = 0; s < samples; ++s) {
    const Sequence seq = sampler.next(t_max);
    Vector h = params.pi;
    BeliefState state = init_state(model);
    for (std::size_t step = 0; step < t_max; ++step) {
      const ConditionalPrediction pred = conditional_dist(model, state);
      norms[step].add(pred.normalizer);
      per_t[step][s] = detail::kl_divergence(params.O * h, pred.probs);

      const Symbol x = seq[step];
      Vector next = params.T * params.O.row(static_cast<Eigen::Index>(x)).transpose().cwiseProduct(h);
      h = next / next.sum();
      state = update_state(model, state, x, ZeroHistoryPolicy::reset);
    }
  }

  std::vector<EvalReport> out(t_max);
  for (std::size_t step = 0; step < t_max; ++step) {
    const auto [mean, se] = detail::mean_se(per_t[step]);
    out[step].t = step + 1;
    out[step].method = EvalMethod::monte_carlo;
    out[step].samples = samples;
    out[step].kl_conditional = mean;
    out[step].kl_se = se;
    out[step].normalizer = norms[step];
  }
  return out;
}

/// E_{x_{1:t}}[ln Pr[x_t | x_{1:t-1}] / P^r[x_t | x_{1:t-1}]] at horizon t.
inline EvalReport kl_conditional(const HmmParams& params, const ObservableModel& model, std::size_t t,
                                 EvalMethod mode, std::size_t samples = 10'000, std::uint64_t seed = 0,
                                 std::uint64_t budget = kEnumerationBudget) {
  if (mode == EvalMethod::monte_carlo) return kl_conditional_curve(params, model, t, samples, seed).back();

  detail::check_pair(params, model);
  if (t == 0) throw DomainError("horizon must be positive");
  detail::check_budget(params.n(), t, budget);

  std::vector<Matrix> A(params.n());
  for (Symbol x = 0; x < params.n(); ++x) A[x] = observation_operator(params, x);

  EvalReport r;
  r.t = t;
  r.method = EvalMethod::enumeration;
  r.samples = static_cast<std::size_t>(detail::sequence_count(params.n(), t));
  double total = 0.0;
  std::function<void(std::size_t, const Vector&, const BeliefState&)> walk =
      [&](std::size_t depth, const Vector& alpha, const BeliefState& state) {
        const double mass = alpha.sum();
        if (!(mass > 0.0)) return;  // unreachable history
        const ConditionalPrediction pred = conditional_dist(model, state);
        r.normalizer.add(pred.normalizer);
        if (depth + 1 == t) {
          total += mass * detail::kl_divergence(params.O * (alpha / mass), pred.probs);
          return;
        }
        for (Symbol x = 0; x < params.n(); ++x)
          walk(depth + 1, A[x] * alpha, update_state(model, state, x, ZeroHistoryPolicy::reset));
      };
  walk(0, params.pi, init_state(model));
  r.kl_conditional = total;
  return r;
}

struct BeliefDiagnostics {
  Vector g_hat;      // (U^T O)^{-1} b_t, normalized to sum 1
  Vector posterior;  // Pr[h_t = . | x_{1:t-1}] from the true forward filter
  double l1_gap = 0.0;
};

/// Compare the model's implied hidden-state distribution with the exact posterior.
inline BeliefDiagnostics belief_diagnostics(const HmmParams& params, const ObservableModel& model,
                                            std::span<const Symbol> history) {
  const Matrix UtO = detail::checked_UtO(params, model.U);
  BeliefState state = init_state(model);
  for (Symbol x : history) state = update_state(model, state, x);
  const Vector h_hat = Eigen::PartialPivLU<Matrix>(UtO).solve(state.b);

  BeliefDiagnostics d;
  d.g_hat = h_hat / h_hat.sum();
  d.posterior = forward_posterior(params, history);
  d.l1_gap = (d.posterior - d.g_hat).lpNorm<1>();
  return d;
}

// ---------------------------------------------------------------------------
// Convergence study

struct StudyConfig {
  std::size_t m = 3;
  std::size_t n = 5;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> N_grid;
  std::size_t t = 3;
  std::size_t repeats = 10;
  double eta = 0.1;
  double min_sigma = 0.02;
  std::size_t mc_samples = 2000;  // used when n^t exceeds the enumeration budget
};

struct StudyRow {
  std::uint64_t N = 0;
  std::size_t t = 0;
  double l1 = 0.0;  // median over repeats
  double l1_se = 0.0;
  double kl = 0.0;  // median over repeats
  double kl_se = 0.0;
  double eps1 = 0.0;  // medians over repeats
  double eps21 = 0.0;
  double eps3sum = 0.0;
  SamplingBounds bounds;
  double within_bounds_fraction = 0.0;
  std::size_t failed = 0;
  std::vector<double> l1_values;
  std::vector<double> kl_values;
  std::vector<double> eps21_values;
};

struct StudyResult {
  HmmParams instance;
  std::vector<StudyRow> rows;
  double l1_slope = std::numeric_limits<double>::quiet_NaN();
  double kl_slope = std::numeric_limits<double>::quiet_NaN();
  double eps21_slope = std::numeric_limits<double>::quiet_NaN();
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 == 1 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

/// Linear interpolation quantile, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Least-squares slope of ln(y) against ln(x), skipping nonpositive points.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double k = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= k;
  my /= k;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// Seed for grid cell g, repeat r: seed + 1 + g * 2^20 + r.
inline std::uint64_t study_cell_seed(std::uint64_t seed, std::size_t grid_index, std::size_t repeat) {
  return seed + 1 + (static_cast<std::uint64_t>(grid_index) << 20) + repeat;
}

/// Run the full pipeline (sample, learn, evaluate) over a grid of sample sizes
/// on one random instance drawn with `seed`. Failed cells are counted, not fatal.
inline StudyResult convergence_study(const StudyConfig& cfg) {
  if (cfg.N_grid.size() < 3) throw DomainError("study grid needs at least three sample sizes");
  if (!std::is_sorted(cfg.N_grid.begin(), cfg.N_grid.end()) || cfg.N_grid.front() == 0)
    throw DomainError("study grid must be ascending and positive");
  if (cfg.repeats == 0) throw DomainError("study needs at least one repeat");

  StudyResult result;
  result.instance = random_hmm(cfg.m, cfg.n, cfg.seed, cfg.min_sigma);
  const HmmParams& params = result.instance;
  const MomentEstimates truth = true_moments(params);
  const bool enumerable = detail::sequence_count(params.n(), cfg.t) <= kEnumerationBudget;

  for (std::size_t g = 0; g < cfg.N_grid.size(); ++g) {
    StudyRow row;
    row.N = cfg.N_grid[g];
    row.t = cfg.t;
    row.bounds = theoretical_bounds(row.N, cfg.eta, truth.middle_marginal());
    std::vector<double> eps1, eps3;
    std::size_t within = 0;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const std::uint64_t cell_seed = study_cell_seed(cfg.seed, g, r);
      try {
        const MomentEstimates est = finalize(sample_moment_counts(params, row.N, cell_seed));
        const SamplingErrorReport errs = sampling_errors(est, truth, cfg.eta);
        const ObservableModel model = learn(est, cfg.m);
        const EvalReport l1 = enumerable ? l1_joint_error_exact(params, model, cfg.t)
                                         : l1_joint_error_mc(params, model, cfg.t, cfg.mc_samples, cell_seed);
        const EvalReport kl =
            kl_conditional(params, model, cfg.t, enumerable ? EvalMethod::enumeration : EvalMethod::monte_carlo,
                           cfg.mc_samples, cell_seed);
        row.l1_values.push_back(*l1.l1_joint);
        row.kl_values.push_back(*kl.kl_conditional);
        row.eps21_values.push_back(errs.eps21);
        eps1.push_back(errs.eps1);
        eps3.push_back(errs.eps3_sum);
        if (errs.within_bounds()) ++within;
      } catch (const Error&) {
        ++row.failed;
      }
    }
    const std::size_t ok = cfg.repeats - row.failed;
    row.l1 = median(row.l1_values);
    row.kl = median(row.kl_values);
    row.l1_se = ok > 0 ? detail::mean_se(row.l1_values).second : 0.0;
    row.kl_se = ok > 0 ? detail::mean_se(row.kl_values).second : 0.0;
    row.eps1 = median(eps1);
    row.eps21 = median(row.eps21_values);
    row.eps3sum = median(eps3);
    row.within_bounds_fraction = ok > 0 ? static_cast<double>(within) / static_cast<double>(ok) : 0.0;
    result.rows.push_back(std::move(row));
  }

  std::vector<double> ns, l1, kl, e21;
  for (const auto& row : result.rows) {
    ns.push_back(static_cast<double>(row.N));
    l1.push_back(row.l1);
    kl.push_back(row.kl);
    e21.push_back(row.eps21);
  }
  result.l1_slope = loglog_slope(ns, l1);
  result.kl_slope = loglog_slope(ns, kl);
  result.eps21_slope = loglog_slope(ns, e21);
  return result;
}

}  // namespace spectral_hmm
