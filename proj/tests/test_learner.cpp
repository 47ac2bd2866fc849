#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/inference.hpp"
#include "spectral_hmm/learner.hpp"

using namespace spectral_hmm;

namespace {

HmmParams ranked(std::uint64_t seed, std::size_t m = 3, std::size_t n = 5) {
  return random_hmm(m, n, seed, 0.005);
}

Matrix random_orthogonal(Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(m, m);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(m, m);
}

double l1_error_by_enumeration(const HmmParams& p, const ObservableModel& model, std::size_t t) {
  double total = 0.0;
  for (const auto& s : oracle::all_sequences(p.n(), t)) total += std::abs(oracle::path_sum_joint(p, s) - joint_prob(model, s));
  return total;
}

}  // namespace

TEST(TruncatedSvd, DiagonalInput) {
  Matrix p21 = Matrix::Zero(3, 3);
  p21.diagonal() << 0.5, 0.3, 0.2;
  const SubspaceResult r = truncated_svd_u(p21, 2);
  EXPECT_LT((r.U - Matrix::Identity(3, 2)).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_EQ(r.svals.size(), 3);
  EXPECT_NEAR(r.svals(0), 0.5, 1e-15);
  EXPECT_NEAR(r.svals(1), 0.3, 1e-15);
  EXPECT_FALSE(r.degenerate_rank);
}

TEST(TruncatedSvd, OrthonormalAndSignCanonical) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix p21(6, 6);
    for (Eigen::Index i = 0; i < p21.size(); ++i) p21.data()[i] = rng.uniform();
    const SubspaceResult r = truncated_svd_u(p21, 3);
    EXPECT_LT((r.U.transpose() * r.U - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index j = 0; j < 3; ++j) {
      Eigen::Index arg = 0;
      r.U.col(j).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(r.U(arg, j), 0.0);
    }
    for (Eigen::Index i = 1; i < r.svals.size(); ++i) EXPECT_LE(r.svals(i), r.svals(i - 1));
  }
}

TEST(TruncatedSvd, SpansRangeOfEmissions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const HmmParams p = ranked(seed);
    const Matrix U = truncated_svd_u(true_moments(p).P21, 3).U;
    const Matrix residual = (Matrix::Identity(5, 5) - U * U.transpose()) * p.O;
    EXPECT_LT(oracle::power_norm(residual), 1e-8);
  }
}

TEST(TruncatedSvd, FlagsDegenerateRank) {
  const MomentEstimates m = true_moments(fixtures::one_state());
  EXPECT_TRUE(truncated_svd_u(m.P21, 2).degenerate_rank);
  EXPECT_FALSE(truncated_svd_u(m.P21, 1).degenerate_rank);
  EXPECT_THROW(truncated_svd_u(m.P21, 3), DomainError);
  EXPECT_THROW(truncated_svd_u(m.P21, 0), DomainError);
}

TEST(Learn, SingleStateAnalytic) {
  const ObservableModel model = learn(true_moments(fixtures::one_state()), 1);
  ASSERT_EQ(model.b1.size(), 1);
  EXPECT_NEAR(model.binf.dot(model.b1), 1.0, 1e-12);
  double total = 0.0;
  for (Symbol x = 0; x < 2; ++x) total += model.binf.dot(model.op(x) * model.b1);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Learn, AnalyticMomentsReproduceJointProbabilities) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const HmmParams p = ranked(seed);
    const ObservableModel model = learn(true_moments(p), 3);
    EXPECT_NEAR(model.binf.dot(model.b1), 1.0, 1e-12);
    for (std::size_t t = 1; t <= 4; ++t) {
      for (const auto& s : oracle::all_sequences(5, t)) {
        const double expected = oracle::path_sum_joint(p, s);
        ASSERT_NEAR(joint_prob(model, s), expected, 1e-10 * expected) << "seed " << seed;
      }
    }
  }
}

TEST(Learn, EmpiricalMomentsAreAccurate) {
  const HmmParams p = fixtures::condition3();
  const ObservableModel model = learn(finalize(sample_moment_counts(p, 100'000, 4)), 3);
  EXPECT_LT(l1_error_by_enumeration(p, model, 3), 0.05);
}

TEST(Learn, IllConditionedMomentsCarrySingularValues) {
  try {
    learn(true_moments(fixtures::one_state()), 2);
    FAIL() << "expected IllConditionedMoments";
  } catch (const IllConditionedMoments& e) {
    EXPECT_EQ(e.svals().size(), 2);
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(Learn, AbsentSymbolsGetZeroOperators) {
  TripleAccumulator acc(4);
  acc.ingest(0, 0, 1);
  acc.ingest(1, 1, 0);
  acc.ingest(0, 1, 1);
  const ObservableModel model = learn(finalize(acc), 1);
  EXPECT_EQ(model.B.count(3), 0u);
  EXPECT_EQ(model.op(3), Matrix::Zero(1, 1));
  EXPECT_EQ(model.apply(3, model.b1), Vector::Zero(1));
}

TEST(Learn, DeterministicBitForBit) {
  const HmmParams p = ranked(9);
  const MomentEstimates est = finalize(sample_moment_counts(p, 20'000, 10));
  const ObservableModel a = learn(est, 3), b = learn(est, 3);
  EXPECT_EQ(a.U, b.U);
  EXPECT_EQ(a.binf, b.binf);
  for (const auto& [x, op] : a.B) EXPECT_EQ(op, b.B.at(x));
}

TEST(Learn, SubspaceRotationLeavesJointsInvariant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const HmmParams p = ranked(20 + seed);
    const Matrix U = truncated_svd_u(true_moments(p).P21, 3).U;
    const ObservableModel a = exact_observable_model(p, U);
    const ObservableModel b = exact_observable_model(p, U * random_orthogonal(3, seed));
    for (const auto& s : oracle::all_sequences(5, 3)) {
      const double pa = joint_prob(a, s), pb = joint_prob(b, s);
      EXPECT_NEAR(pa, pb, 1e-10 * pa);
    }
  }
}

TEST(ExactObservableModel, MatchesLearnedFromAnalyticMoments) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const HmmParams p = ranked(30 + seed);
    const ObservableModel learned = learn(true_moments(p), 3);
    const ObservableModel exact = exact_observable_model(p, learned.U);
    EXPECT_LT((learned.b1 - exact.b1).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((learned.binf - exact.binf).cwiseAbs().maxCoeff(), 1e-10 * exact.binf.cwiseAbs().maxCoeff());
    for (Symbol x = 0; x < 5; ++x)
      EXPECT_LT((learned.op(x) - exact.op(x)).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, exact.op(x).norm()));
  }
}

TEST(ExactObservableModel, IdentitySubspaceGivesSimilarityByO) {
  const HmmParams p = random_hmm(3, 3, 5, 0.01);
  const ObservableModel model = exact_observable_model(p, Matrix::Identity(3, 3));
  const Matrix O_inv = p.O.inverse();
  for (Symbol x = 0; x < 3; ++x)
    EXPECT_LT((model.op(x) - p.O * observation_operator(p, x) * O_inv).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((model.b1 - p.O * p.pi).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExactObservableModel, NormalizationIsExact) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const HmmParams p = ranked(40 + seed);
    const ObservableModel model = exact_observable_model(p, truncated_svd_u(true_moments(p).P21, 3).U);
    EXPECT_NEAR(model.binf.dot(model.b1), 1.0, 1e-12);
  }
}

TEST(ExactObservableModel, SingularProjectionRejected) {
  HmmParams p{Matrix::Ones(1, 1), Matrix(3, 1), Vector::Ones(1)};
  p.O << 1.0, 0.0, 0.0;
  EXPECT_THROW(exact_observable_model(p, Vector::Unit(3, 1)), NotInvertible);
}

TEST(ParameterErrors, VanishForAnalyticModel) {
  const HmmParams p = ranked(50);
  const ParameterErrorReport r = parameter_errors(learn(true_moments(p), 3), p);
  EXPECT_LT(r.delta1, 1e-9);
  EXPECT_LT(r.delta_inf, 1e-9);
  EXPECT_LT(r.Delta, 1e-9);
  EXPECT_GT(r.sigma_m_UO, 0.0);
}

TEST(ParameterErrors, Delta1TracksStatePerturbation) {
  const HmmParams p = ranked(51);
  ObservableModel model = learn(true_moments(p), 3);
  Vector d(3);
  d << 1e-3, -2e-3, 5e-4;
  model.b1 += d;
  const Matrix UtO_inv = (model.U.transpose() * p.O).inverse();
  EXPECT_NEAR(parameter_errors(model, p).delta1, (UtO_inv * d).lpNorm<1>(), 1e-12);
}

TEST(ParameterErrors, DeltaIsSumOfPerSymbolErrors) {
  const HmmParams p = ranked(52);
  const ParameterErrorReport r = parameter_errors(learn(finalize(sample_moment_counts(p, 5'000, 1)), 3), p);
  double sum = 0.0;
  for (const auto& [x, d] : r.Delta_x) {
    EXPECT_GE(d, 0.0);
    sum += d;
  }
  EXPECT_EQ(r.Delta_x.size(), 5u);
  EXPECT_NEAR(r.Delta, sum, 1e-12);
}

TEST(ParameterErrors, ShrinkWithSampleSize) {
  const HmmParams p = fixtures::condition3();
  std::vector<double> d1, dinf, big_delta;
  for (std::uint64_t N : {1'000ull, 10'000ull, 100'000ull}) {
    std::vector<double> a, b, c;
    for (std::uint64_t r = 0; r < 20; ++r) {
      const ParameterErrorReport e = parameter_errors(learn(finalize(sample_moment_counts(p, N, 7 * N + r)), 3), p);
      a.push_back(e.delta1);
      b.push_back(e.delta_inf);
      c.push_back(e.Delta);
    }
    auto med = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return 0.5 * (v[9] + v[10]);
    };
    d1.push_back(med(a));
    dinf.push_back(med(b));
    big_delta.push_back(med(c));
  }
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_LT(d1[i], d1[i - 1]);
    EXPECT_LT(dinf[i], dinf[i - 1]);
    EXPECT_LT(big_delta[i], big_delta[i - 1]);
  }
}
