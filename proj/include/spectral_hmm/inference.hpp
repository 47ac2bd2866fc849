#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/learner.hpp"

namespace spectral_hmm {

/// Normalized internal state b_t after consuming t observations.
struct BeliefState {
  Vector b;
  std::size_t t = 0;
  double log_norm = 0.0;  // sum of ln|binf^T B_x b| over consumed symbols
  int sign = 1;           // sign of the product of those normalizers
  std::size_t resets = 0;
};

/// What update_state does when a normalizer vanishes.
enum class ZeroHistoryPolicy { fail, reset };

inline constexpr double kNormalizerFloor = 1e-300;
inline constexpr double kProbabilityFloor = 1e-12;

inline void check_symbol(const ObservableModel& model, Symbol x) {
  if (x >= model.n)
    throw DomainError("symbol " + std::to_string(x + 1) + " outside alphabet of size " +
                      std::to_string(model.n));
}

inline BeliefState init_state(const ObservableModel& model) { return BeliefState{model.b1}; }

/// binf^T B_x b, the unnormalized score of x in the current state.
inline double raw_score(const ObservableModel& model, const BeliefState& state, Symbol x) {
  check_symbol(model, x);
  return model.binf.dot(model.apply(x, state.b));
}

/// b' = B_x b / (binf^T B_x b). With the reset policy a vanishing normalizer
/// restarts the filter from b1 instead of throwing.
inline BeliefState update_state(const ObservableModel& model, const BeliefState& state, Symbol x,
                                ZeroHistoryPolicy policy = ZeroHistoryPolicy::fail) {
  check_symbol(model, x);
  const Vector next = model.apply(x, state.b);
  const double s = model.binf.dot(next);
  BeliefState out;
  out.t = state.t + 1;
  if (!(std::abs(s) >= kNormalizerFloor)) {
    if (policy == ZeroHistoryPolicy::fail) throw ZeroProbabilityHistory(state.t, x, ErrorKind::numeric);
    out.b = model.b1;
    out.log_norm = state.log_norm;
    out.sign = state.sign;
    out.resets = state.resets + 1;
    return out;
  }
  out.b = next / s;
  out.log_norm = state.log_norm + std::log(std::abs(s));
  out.sign = s < 0.0 ? -state.sign : state.sign;
  out.resets = state.resets;
  return out;
}

/// binf^T B_{x_t} ... B_{x_1} b1, unclamped. Empirical models can return values
/// slightly below 0 or above 1.
inline double joint_prob(const ObservableModel& model, std::span<const Symbol> seq) {
  Vector b = model.b1;
  for (Symbol x : seq) {
    check_symbol(model, x);
    b = model.apply(x, b);
  }
  return model.binf.dot(b);
}

inline double joint_prob_clamped(const ObservableModel& model, std::span<const Symbol> seq) {
  return std::clamp(joint_prob(model, seq), 0.0, 1.0);
}

struct ConditionalPrediction {
  Vector probs;       // clamped at the floor and renormalized
  Vector raw;         // binf^T B_x b for every x
  double normalizer;  // sum of raw scores
};

/// Next-symbol distribution from the current state.
inline ConditionalPrediction conditional_dist(const ObservableModel& model, const BeliefState& state,
                                              double floor = kProbabilityFloor) {
  ConditionalPrediction out;
  out.raw.resize(static_cast<Eigen::Index>(model.n));
  for (Symbol x = 0; x < model.n; ++x)
    out.raw(static_cast<Eigen::Index>(x)) = model.binf.dot(model.apply(x, state.b));
  if (!(out.raw.maxCoeff() > 0.0))
    throw NumericError("degenerate prediction: every raw conditional score is nonpositive");
  out.normalizer = out.raw.sum();
  out.probs = out.raw.cwiseMax(floor);
  out.probs /= out.probs.sum();
  return out;
}

struct LogLikelihood {
  double total = 0.0;
  std::vector<double> per_step;
};

/// Sum over t of ln P^(x_t | x_{1:t-1}) using clamped conditionals.
inline LogLikelihood sequence_loglik(const ObservableModel& model, std::span<const Symbol> seq,
                                     ZeroHistoryPolicy policy = ZeroHistoryPolicy::fail) {
  LogLikelihood ll;
  ll.per_step.reserve(seq.size());
  BeliefState state = init_state(model);
  for (Symbol x : seq) {
    check_symbol(model, x);
    const ConditionalPrediction pred = conditional_dist(model, state);
    const double term = std::log(pred.probs(static_cast<Eigen::Index>(x)));
    ll.per_step.push_back(term);
    ll.total += term;
    state = update_state(model, state, x, policy);
  }
  return ll;
}

}  // namespace spectral_hmm
