#include <charconv>
#include <cstring>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "spectral_hmm/io.hpp"

using namespace spectral_hmm;

namespace {

template <class T, class W, class R>
T round_trip(const T& value, W write, R read) {
  std::stringstream ss;
  write(ss, value);
  return read(ss);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(FormatDouble, SeventeenDigitsRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 100'000; ++i) {
    const double scale = std::ldexp(1.0, static_cast<int>(rng.next() % 200) - 100);
    const double v = (rng.uniform() - 0.5) * scale;
    const std::string s = io::format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    ASSERT_TRUE(same_bits(v, back)) << s;
  }
  for (double v : {0.0, 1.0, -1.0, 5e-324, 1.7976931348623157e308, 0.1}) {
    const std::string s = io::format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_TRUE(same_bits(v, back)) << s;
  }
}

TEST(HmmFile, RoundTripIsExact) {
  const HmmParams p = random_hmm(3, 5, 4, 0.0);
  const HmmParams q = round_trip(p, io::write_hmm, [](std::istream& is) { return io::read_hmm(is); });
  EXPECT_EQ(p.T, q.T);
  EXPECT_EQ(p.O, q.O);
  EXPECT_EQ(p.pi, q.pi);
}

TEST(HmmFile, WriteReadWriteIsByteIdentical) {
  std::stringstream a, b;
  io::write_hmm(a, random_hmm(2, 4, 9, 0.0));
  io::write_hmm(b, io::read_hmm(a));
  EXPECT_EQ(a.str(), b.str());
}

TEST(HmmFile, CommentsAndBlankLinesIgnored) {
  std::istringstream in("# header\nHMM 1 2\n\n# pi follows\nPI\n1\nT\n1\nO\n0.25\n  # indented comment\n0.75\n");
  const HmmParams p = io::read_hmm(in);
  EXPECT_EQ(p.O(0, 0), 0.25);
  EXPECT_EQ(p.O(1, 0), 0.75);
}

TEST(HmmFile, ErrorsCarryLineNumbers) {
  std::istringstream in("HMM 1 2\nPI\n1\nT\nx\nO\n0.25 0.75\n");
  try {
    io::read_hmm(in, "model.hmm");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("model.hmm:5:"), std::string::npos) << e.what();
    EXPECT_EQ(exit_code(e.kind()), 3);
  }
}

TEST(HmmFile, TruncatedAndTrailingInputRejected) {
  std::istringstream truncated("HMM 2 2\nPI\n0.5 0.5\nT\n1 0\n");
  EXPECT_THROW(io::read_hmm(truncated), FormatError);
  std::istringstream trailing("HMM 1 1\nPI\n1\nT\n1\nO\n1\nextra\n");
  EXPECT_THROW(io::read_hmm(trailing), FormatError);
  std::istringstream header("HMX 1 1\n");
  EXPECT_THROW(io::read_hmm(header), FormatError);
}

TEST(MomentsFile, RoundTripIsExact) {
  const MomentEstimates est = finalize(sample_moment_counts(fixtures::condition3(), 3'000, 2));
  const MomentEstimates back = round_trip(est, io::write_moments, [](std::istream& is) { return io::read_moments(is); });
  EXPECT_EQ(back.n, est.n);
  EXPECT_EQ(back.N, est.N);
  EXPECT_EQ(back.P1, est.P1);
  EXPECT_EQ(back.P21, est.P21);
  ASSERT_EQ(back.P3.size(), est.P3.size());
  for (const auto& [x, table] : est.P3) EXPECT_EQ(back.P3.at(x), table);
}

TEST(MomentsFile, AnalyticMarkerAndSparseTables) {
  MomentEstimates est = true_moments(fixtures::one_state());
  est.P3.erase(0);
  const MomentEstimates back = round_trip(est, io::write_moments, [](std::istream& is) { return io::read_moments(is); });
  EXPECT_TRUE(back.analytic());
  EXPECT_EQ(back.P3.count(0), 0u);
  EXPECT_EQ(back.p3(0), Matrix::Zero(2, 2));
}

TEST(MomentsFile, DuplicateTableRejected) {
  std::istringstream in("MOMENTS 1 5\nP1\n1\nP21\n1\nP3 1\n1\nP3 1\n1\n");
  EXPECT_THROW(io::read_moments(in), FormatError);
}

TEST(ModelFile, RoundTripIsExact) {
  const ObservableModel m = learn(finalize(sample_moment_counts(fixtures::condition3(), 5'000, 3)), 3);
  const ObservableModel back = round_trip(m, io::write_model, [](std::istream& is) { return io::read_model(is); });
  EXPECT_EQ(back.m, m.m);
  EXPECT_EQ(back.n, m.n);
  EXPECT_EQ(back.U, m.U);
  EXPECT_EQ(back.b1, m.b1);
  EXPECT_EQ(back.binf, m.binf);
  EXPECT_EQ(back.svals, m.svals);
  ASSERT_EQ(back.B.size(), m.B.size());
  for (const auto& [x, op] : m.B) EXPECT_EQ(back.B.at(x), op);
}

TEST(ModelFile, RejectsBadDimensions) {
  std::istringstream in("OOM 3 2\n");
  EXPECT_THROW(io::read_model(in), FormatError);
}

TEST(TriplesFile, RoundTripIsOneBased) {
  const std::vector<Triple> t = sample_triples(fixtures::condition3(), 200, 5);
  std::stringstream ss;
  io::write_triples(ss, t);
  EXPECT_EQ(ss.str().find('0'), std::string::npos);
  EXPECT_EQ(io::read_triples(ss, 5), t);
}

TEST(TriplesFile, MalformedLines) {
  std::istringstream zero("1 2 3\n0 1 1\n");
  EXPECT_THROW(io::read_triples(zero), FormatError);
  std::istringstream wide("1 2 3 4\n");
  EXPECT_THROW(io::read_triples(wide), FormatError);
  std::istringstream range("1 2 6\n");
  EXPECT_THROW(io::read_triples(range, 5), FormatError);
  std::istringstream ok("# comment\n1 2 6\n");
  EXPECT_EQ(io::read_triples(ok).size(), 1u);
}

TEST(SequencesFile, RoundTrip) {
  SequenceSampler gen(fixtures::condition3(), 7);
  std::vector<Sequence> corpus;
  for (std::size_t k = 1; k <= 20; ++k) corpus.push_back(gen.next(k));
  std::stringstream ss;
  io::write_sequences(ss, corpus);
  EXPECT_EQ(io::read_sequences(ss, 5), corpus);
}

TEST(SequencesFile, BadTokenNamesLine) {
  std::istringstream in("1 2\n3 x 1\n");
  try {
    io::read_sequences(in, 5, "c.txt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("c.txt:2:"), std::string::npos);
  }
}

TEST(Reports, EvalRowMatchesHeader) {
  EvalReport r;
  r.t = 3;
  r.l1_joint = 0.125;
  std::ostringstream os;
  io::write_eval_row(os, r);
  const std::string row = os.str();
  const auto tabs = [](std::string_view s) { return std::count(s.begin(), s.end(), '\t'); };
  EXPECT_EQ(tabs(row), tabs(io::kEvalHeader));
  EXPECT_EQ(row.substr(0, 2), "3\t");
}
