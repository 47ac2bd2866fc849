#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/evaluation.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/learner.hpp"
#include "spectral_hmm/moments.hpp"
#include "spectral_hmm/recovery.hpp"

// Text formats. Symbols are 1-based on disk. Numbers are written with 17
// significant digits, which round-trips IEEE doubles exactly. Lines starting
// with '#' are comments.
//
//   HMM m n / PI / <m> / T / <m lines of m> / O / <n lines of m>
//   MOMENTS n N / P1 / <n> / P21 / <n lines of n> / (P3 x / <n lines of n>)*
//   OOM m n / SVALS k / <k> / U / <n lines of m> / B1VEC / <m> / BINF / <m> / (B x / <m lines of m>)*

namespace spectral_hmm::io {

inline std::string format_double(double v, int digits = 17) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

namespace detail {

inline void write_row(std::ostream& os, const auto& row) {
  for (Eigen::Index j = 0; j < row.size(); ++j) os << (j > 0 ? " " : "") << format_double(row(j));
  os << '\n';
}

inline void write_rows(std::ostream& os, const Matrix& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) write_row(os, a.row(i));
}

/// Whitespace tokens with their line numbers, comment lines dropped.
class TokenStream {
 public:
  TokenStream(std::istream& is, std::string source) : source_(std::move(source)) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens_.push_back({tok, lineno});
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }

  std::string_view peek() const { return done() ? std::string_view() : std::string_view(tokens_[pos_].text); }

  void expect(std::string_view keyword) {
    if (done() || tokens_[pos_].text != keyword) fail("expected '" + std::string(keyword) + "'");
    ++pos_;
  }

  double number() {
    if (done()) fail("unexpected end of input, expected a number");
    const std::string& s = tokens_[pos_].text;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("malformed number '" + s + "'");
    ++pos_;
    return v;
  }

  std::uint64_t count() {
    if (done()) fail("unexpected end of input, expected an integer");
    const std::string& s = tokens_[pos_].text;
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("malformed integer '" + s + "'");
    ++pos_;
    return v;
  }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = number();
    return a;
  }

  Vector vector(Eigen::Index size) {
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = number();
    return v;
  }

  void expect_end() {
    if (!done()) fail("trailing content '" + tokens_[pos_].text + "'");
  }

  [[noreturn]] void fail(const std::string& what) const {
    const std::size_t line = done() ? (tokens_.empty() ? 0 : tokens_.back().line) : tokens_[pos_].line;
    throw FormatError(source_ + ":" + std::to_string(line) + ": " + what);
  }

 private:
  struct Token {
    std::string text;
    std::size_t line;
  };
  std::string source_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// HMM

inline void write_hmm(std::ostream& os, const HmmParams& p) {
  check_dimensions(p);
  os << "HMM " << p.m() << ' ' << p.n() << '\n';
  os << "PI\n";
  detail::write_row(os, p.pi.transpose());
  os << "T\n";
  detail::write_rows(os, p.T);
  os << "O\n";
  detail::write_rows(os, p.O);
}

inline HmmParams read_hmm(std::istream& is, const std::string& source = "<hmm>") {
  detail::TokenStream ts(is, source);
  ts.expect("HMM");
  const auto m = static_cast<Eigen::Index>(ts.count());
  const auto n = static_cast<Eigen::Index>(ts.count());
  if (m < 1 || n < 1) ts.fail("HMM dimensions must be positive");
  HmmParams p;
  ts.expect("PI");
  p.pi = ts.vector(m);
  ts.expect("T");
  p.T = ts.matrix(m, m);
  ts.expect("O");
  p.O = ts.matrix(n, m);
  ts.expect_end();
  return p;
}

/// Recovered HMM with its diagnostics as a comment header.
inline void write_recovered(std::ostream& os, const RecoveredHmm& r) {
  os << "# recovered HMM\n";
  os << "# max_imag_discarded " << format_double(r.residuals.max_imag_discarded) << '\n';
  os << "# min_eigen_gap " << format_double(r.residuals.min_eigen_gap) << '\n';
  os << "# max_offdiag_residual " << format_double(r.residuals.max_offdiag_residual) << '\n';
  os << "# stochasticity_defect " << format_double(r.residuals.stochasticity_defect) << '\n';
  os << "# permutation";
  for (std::size_t k : r.permutation) os << ' ' << k + 1;
  os << '\n';
  write_hmm(os, r.params);
}

// ---------------------------------------------------------------------------
// Moments

inline void write_moments(std::ostream& os, const MomentEstimates& est) {
  check_shapes(est);
  os << "MOMENTS " << est.n << ' ' << est.N << '\n';
  os << "P1\n";
  detail::write_row(os, est.P1.transpose());
  os << "P21\n";
  detail::write_rows(os, est.P21);
  for (const auto& [x, table] : est.P3) {
    os << "P3 " << x + 1 << '\n';
    detail::write_rows(os, table);
  }
}

inline MomentEstimates read_moments(std::istream& is, const std::string& source = "<moments>") {
  detail::TokenStream ts(is, source);
  ts.expect("MOMENTS");
  MomentEstimates est;
  est.n = ts.count();
  est.N = ts.count();
  const auto n = static_cast<Eigen::Index>(est.n);
  if (n < 1) ts.fail("alphabet size must be positive");
  ts.expect("P1");
  est.P1 = ts.vector(n);
  ts.expect("P21");
  est.P21 = ts.matrix(n, n);
  while (!ts.done()) {
    ts.expect("P3");
    const std::uint64_t x = ts.count();
    if (x < 1 || x > est.n) ts.fail("P3 symbol out of range");
    if (!est.P3.emplace(x - 1, ts.matrix(n, n)).second) ts.fail("duplicate P3 table");
  }
  return est;
}

// ---------------------------------------------------------------------------
// Observable model

inline void write_model(std::ostream& os, const ObservableModel& model) {
  os << "OOM " << model.m << ' ' << model.n << '\n';
  os << "SVALS " << model.svals.size() << '\n';
  detail::write_row(os, model.svals.transpose());
  os << "U\n";
  detail::write_rows(os, model.U);
  os << "B1VEC\n";
  detail::write_row(os, model.b1.transpose());
  os << "BINF\n";
  detail::write_row(os, model.binf.transpose());
  for (const auto& [x, op] : model.B) {
    os << "B " << x + 1 << '\n';
    detail::write_rows(os, op);
  }
}

inline ObservableModel read_model(std::istream& is, const std::string& source = "<model>") {
  detail::TokenStream ts(is, source);
  ts.expect("OOM");
  ObservableModel model;
  model.m = ts.count();
  model.n = ts.count();
  const auto m = static_cast<Eigen::Index>(model.m);
  const auto n = static_cast<Eigen::Index>(model.n);
  if (m < 1 || n < 1 || m > n) ts.fail("model dimensions must satisfy 1 <= m <= n");
  ts.expect("SVALS");
  model.svals = ts.vector(static_cast<Eigen::Index>(ts.count()));
  ts.expect("U");
  model.U = ts.matrix(n, m);
  ts.expect("B1VEC");
  model.b1 = ts.vector(m);
  ts.expect("BINF");
  model.binf = ts.vector(m);
  while (!ts.done()) {
    ts.expect("B");
    const std::uint64_t x = ts.count();
    if (x < 1 || x > model.n) ts.fail("operator symbol out of range");
    if (!model.B.emplace(x - 1, ts.matrix(m, m)).second) ts.fail("duplicate operator");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Triples and sequences

inline void write_triples(std::ostream& os, std::span<const Triple> triples) {
  for (const auto& t : triples) os << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

/// One triple per line. Symbols must lie in [1, n] when n > 0.
inline std::vector<Triple> read_triples(std::istream& is, std::size_t n = 0,
                                        const std::string& source = "<triples>") {
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Triple t{};
    long long v = 0;
    for (auto& x : t) {
      if (!(ls >> v) || v < 1 || (n > 0 && static_cast<std::size_t>(v) > n))
        throw FormatError(source + ":" + std::to_string(lineno) + ": bad triple");
      x = static_cast<Symbol>(v - 1);
    }
    std::string extra;
    if (ls >> extra) throw FormatError(source + ":" + std::to_string(lineno) + ": more than three symbols");
    out.push_back(t);
  }
  return out;
}

inline void write_sequences(std::ostream& os, std::span<const Sequence> corpus) {
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) os << (i > 0 ? " " : "") << seq[i] + 1;
    os << '\n';
  }
}

/// One sequence per line, whitespace-separated 1-based symbols. Blank lines are skipped.
inline std::vector<Sequence> read_sequences(std::istream& is, std::size_t n = 0,
                                            const std::string& source = "<corpus>") {
  std::vector<Sequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Sequence seq;
    std::string tok;
    while (ls >> tok) {
      long long v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 1 ||
          (n > 0 && static_cast<std::size_t>(v) > n))
        throw FormatError(source + ":" + std::to_string(lineno) + ": bad symbol '" + tok + "'");
      seq.push_back(static_cast<Symbol>(v - 1));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr std::string_view kEvalHeader =
    "t\tmethod\tsamples\tl1\tl1_se\tkl\tkl_se\tnorm_min\tnorm_mean\tnorm_max";

inline void write_eval_row(std::ostream& os, const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v, 10) : std::string("-"); };
  const bool has_norm = r.normalizer.count > 0;
  os << r.t << '\t' << to_string(r.method) << '\t' << r.samples << '\t' << opt(r.l1_joint) << '\t'
     << format_double(r.l1_se, 10) << '\t' << opt(r.kl_conditional) << '\t' << format_double(r.kl_se, 10)
     << '\t' << (has_norm ? format_double(r.normalizer.min, 10) : "-") << '\t'
     << (has_norm ? format_double(r.normalizer.mean(), 10) : "-") << '\t'
     << (has_norm ? format_double(r.normalizer.max, 10) : "-") << '\n';
}

inline constexpr std::string_view kStudyHeader =
    "N\tt\tl1\tl1_se\tkl\tkl_se\teps1\teps21\teps3sum\tbound_eps1\tbound_eps21\tbound_eps3sum\tfailed";

/// Study table; the footer row carries fitted log-log slopes in the l1, kl and eps21 columns.
inline void write_study(std::ostream& os, const StudyResult& s) {
  auto f = [](double v) { return format_double(v, 10); };
  os << kStudyHeader << '\n';
  for (const auto& r : s.rows) {
    os << r.N << '\t' << r.t << '\t' << f(r.l1) << '\t' << f(r.l1_se) << '\t' << f(r.kl) << '\t' << f(r.kl_se)
       << '\t' << f(r.eps1) << '\t' << f(r.eps21) << '\t' << f(r.eps3sum) << '\t' << f(r.bounds.bound_eps1)
       << '\t' << f(r.bounds.bound_eps21) << '\t' << f(r.bounds.bound_eps3_sum) << '\t' << r.failed << '\n';
  }
  os << "slope\t-\t" << f(s.l1_slope) << "\t-\t" << f(s.kl_slope) << "\t-\t-\t" << f(s.eps21_slope)
     << "\t-\t-\t-\t-\t-\n";
}

// ---------------------------------------------------------------------------
// File helpers

inline HmmParams load_hmm(const std::string& path) {
  auto in = detail::open_in(path);
  return read_hmm(in, path);
}

inline void save_hmm(const std::string& path, const HmmParams& p) {
  auto out = detail::open_out(path);
  write_hmm(out, p);
}

inline MomentEstimates load_moments(const std::string& path) {
  auto in = detail::open_in(path);
  return read_moments(in, path);
}

inline void save_moments(const std::string& path, const MomentEstimates& est) {
  auto out = detail::open_out(path);
  write_moments(out, est);
}

inline ObservableModel load_model(const std::string& path) {
  auto in = detail::open_in(path);
  return read_model(in, path);
}

inline void save_model(const std::string& path, const ObservableModel& model) {
  auto out = detail::open_out(path);
  write_model(out, model);
}

inline std::vector<Triple> load_triples(const std::string& path, std::size_t n = 0) {
  auto in = detail::open_in(path);
  return read_triples(in, n, path);
}

inline std::vector<Sequence> load_sequences(const std::string& path, std::size_t n = 0) {
  auto in = detail::open_in(path);
  return read_sequences(in, n, path);
}

}  // namespace spectral_hmm::io
