// Learn an observable-operator model from sampled triples and compare its
// predictions with the generating HMM.

#include <cstdio>

#include "spectral_hmm/spectral_hmm.hpp"

int main() {
  using namespace spectral_hmm;

  const HmmParams hmm = random_hmm(3, 5, /*seed=*/7, /*min_sigma=*/0.02);
  const MomentEstimates est = finalize(sample_moment_counts(hmm, 100'000, /*seed=*/8));
  const ObservableModel model = learn(est, 3);

  const Sequence seq = sample_sequence(hmm, 6, /*seed=*/9);
  std::printf("Pr[seq]  true %.6g  learned %.6g\n", joint_prob_exact(hmm, seq), joint_prob(model, seq));

  const EvalReport l1 = l1_joint_error_exact(hmm, model, 3);
  std::printf("L1 joint error at t=3: %.4g\n", *l1.l1_joint);

  BeliefState state = init_state(model);
  for (Symbol x : seq) state = update_state(model, state, x);
  const ConditionalPrediction next = conditional_dist(model, state);
  std::printf("next-symbol distribution:");
  for (Eigen::Index x = 0; x < next.probs.size(); ++x) std::printf(" %.4f", next.probs(x));
  std::printf("  (normalizer %.6f)\n", next.normalizer);
  return 0;
}
