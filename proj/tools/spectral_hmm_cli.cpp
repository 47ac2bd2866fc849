// spectral-hmm: generate HMMs, sample triples, learn observable-operator
// models, evaluate them, recover explicit parameters, and run scaling studies.
//
// Exit status: 0 ok, 2 usage, 3 format, 4 numeric/rank, 5 instability.
// Report tables go to stdout; diagnostics go to stderr.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spectral_hmm/spectral_hmm.hpp"

namespace {

using namespace spectral_hmm;

/// Writes to a file, or to stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw FormatError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t m = 0, n = 0;
  std::uint64_t seed = 0;
  double min_sigma = 0.0;
  std::string out;
};

int run_gen(const GenArgs& a) {
  if (a.m < 1 || a.m > a.n) throw UsageError("gen requires 1 <= m <= n");
  const HmmParams p = random_hmm(a.m, a.n, a.seed, a.min_sigma);
  const ValidationReport report = validate(p, a.min_sigma > 0.0);
  for (const auto& v : report.violations) std::cerr << "warning: " << v << '\n';
  Output out(a.out);
  out.stream() << "# gen m=" << a.m << " n=" << a.n << " seed=" << a.seed
               << " min_sigma=" << io::format_double(a.min_sigma) << '\n';
  io::write_hmm(out.stream(), p);
  return 0;
}

struct SampleArgs {
  std::string model;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  std::size_t shards = 1;
  std::size_t length = 0;  // > 0 switches to sequence-corpus output
  std::string out;
};

int run_sample(const SampleArgs& a) {
  if (a.N == 0) throw UsageError("sample requires --N >= 1");
  const HmmParams p = io::load_hmm(a.model);
  check_dimensions(p);
  Output out(a.out);
  if (a.length > 0) {
    std::vector<Sequence> corpus;
    corpus.reserve(a.N);
    SequenceSampler sampler(p, a.seed);
    for (std::size_t i = 0; i < a.N; ++i) corpus.push_back(sampler.next(a.length));
    io::write_sequences(out.stream(), corpus);
  } else {
    io::write_triples(out.stream(), sample_triples(p, a.N, a.seed, a.shards));
  }
  return 0;
}

/// Moments from exactly one of: a triples file, a moments file, or an HMM (analytic).
struct MomentSource {
  std::string triples, moments, analytic_from;
  std::size_t n = 0;

  MomentEstimates load() const {
    const int given = !triples.empty() + !moments.empty() + !analytic_from.empty();
    if (given != 1) throw UsageError("give exactly one of --triples, --moments, --analytic-from");
    if (!moments.empty()) return io::load_moments(moments);
    if (!analytic_from.empty()) return true_moments(io::load_hmm(analytic_from));
    const auto data = io::load_triples(triples, n);
    if (data.empty()) throw FormatError("triples file '" + triples + "' is empty");
    std::size_t alphabet = n;
    for (const auto& t : data)
      for (Symbol x : t) alphabet = std::max(alphabet, x + 1);
    TripleAccumulator acc(alphabet);
    for (const auto& t : data) acc.ingest(t[0], t[1], t[2]);
    return finalize(acc);
  }
};

struct LearnArgs {
  MomentSource source;
  std::size_t m = 0;
  std::string out, moments_out;
};

int run_learn(const LearnArgs& a) {
  const MomentEstimates est = a.source.load();
  if (a.m < 1 || a.m > est.n) throw UsageError("learn requires 1 <= m <= n");
  if (!a.moments_out.empty()) io::save_moments(a.moments_out, est);
  const ObservableModel model = learn(est, a.m);
  if (model.degenerate_rank)
    std::cerr << "warning: sigma_m(P21) is below the rank tolerance; the model may be unreliable\n";
  Output out(a.out);
  io::write_model(out.stream(), model);
  return 0;
}

struct EvalArgs {
  std::string model, oom;
  std::size_t t = 3;
  std::string mode = "enumeration";
  std::string metric = "both";
  std::size_t samples = 10'000;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  if (a.t == 0) throw UsageError("eval requires --t >= 1");
  const HmmParams p = io::load_hmm(a.model);
  const ObservableModel model = io::load_model(a.oom);
  const bool mc = a.mode == "monte-carlo";

  EvalReport report;
  if (a.metric != "kl") {
    report = mc ? l1_joint_error_mc(p, model, a.t, a.samples, a.seed) : l1_joint_error_exact(p, model, a.t);
  }
  if (a.metric != "l1") {
    const EvalReport kl = kl_conditional(p, model, a.t, mc ? EvalMethod::monte_carlo : EvalMethod::enumeration,
                                         a.samples, a.seed);
    report.t = kl.t;
    report.method = kl.method;
    report.samples = kl.samples;
    report.kl_conditional = kl.kl_conditional;
    report.kl_se = kl.kl_se;
    report.normalizer = kl.normalizer;
  }
  std::cout << "# eval seed=" << a.seed << '\n' << io::kEvalHeader << '\n';
  io::write_eval_row(std::cout, report);
  return 0;
}

struct RecoverArgs {
  MomentSource source;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  bool project = false;
  double min_gap = RecoveryOptions{}.min_relative_gap;
  std::string out;
};

int run_recover(const RecoverArgs& a) {
  const MomentEstimates est = a.source.load();
  if (a.m < 1 || a.m > est.n) throw UsageError("recover requires 1 <= m <= n");
  RecoveryOptions options;
  options.project_stochastic = a.project;
  options.min_relative_gap = a.min_gap;
  const RecoveredHmm r = recover(est, a.m, a.seed, options);
  std::cerr << "min_eigen_gap " << r.residuals.min_eigen_gap << "  max_offdiag_residual "
            << r.residuals.max_offdiag_residual << "  stochasticity_defect " << r.residuals.stochasticity_defect
            << '\n';
  Output out(a.out);
  out.stream() << "# recover m=" << a.m << " seed=" << a.seed << '\n';
  io::write_recovered(out.stream(), r);
  return 0;
}

struct StudyArgs {
  StudyConfig cfg;
  std::string out;
};

int run_study(const StudyArgs& a) {
  if (a.cfg.m < 1 || a.cfg.m > a.cfg.n) throw UsageError("study requires 1 <= m <= n");
  if (a.cfg.N_grid.size() < 3) throw UsageError("study requires at least three --grid values");
  const StudyResult result = convergence_study(a.cfg);
  Output out(a.out);
  out.stream() << "# study m=" << a.cfg.m << " n=" << a.cfg.n << " seed=" << a.cfg.seed
               << " repeats=" << a.cfg.repeats << " eta=" << io::format_double(a.cfg.eta) << '\n';
  io::write_study(out.stream(), result);
  return 0;
}

struct ScoreArgs {
  std::string oom, corpus;
  bool reset = false;
};

int run_score(const ScoreArgs& a) {
  const ObservableModel model = io::load_model(a.oom);
  const auto corpus = io::load_sequences(a.corpus, model.n);
  const auto policy = a.reset ? ZeroHistoryPolicy::reset : ZeroHistoryPolicy::fail;
  std::cout << "index\tlength\tloglik\tjoint_raw\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const LogLikelihood ll = sequence_loglik(model, corpus[i], policy);
    std::cout << i + 1 << '\t' << corpus[i].size() << '\t' << io::format_double(ll.total, 12) << '\t'
              << io::format_double(joint_prob(model, corpus[i]), 12) << '\n';
  }
  return 0;
}

struct InspectArgs {
  std::string model;
  std::size_t restarts = 64;
};

int run_inspect(const InspectArgs& a) {
  const HmmParams p = io::load_hmm(a.model);
  const ValidationReport v = validate(p, true);
  const SpectralDiagnostics d = compute_diagnostics(p, a.restarts);
  auto f = [](double x) { return io::format_double(x, 10); };
  std::cout << "quantity\tvalue\n";
  std::cout << "valid\t" << (v.ok() ? "yes" : "no") << '\n';
  std::cout << "sigma_m_O\t" << f(d.sigma_m_O) << '\n';
  std::cout << "sigma_m_P21\t" << f(d.sigma_m_P21) << '\n';
  std::cout << "rank_T\t" << v.rank_T << '\n';
  std::cout << "gamma_lower\t" << f(d.gamma_lower) << '\n';
  std::cout << "gamma_estimate\t" << f(d.gamma_estimate) << '\n';
  std::cout << "alpha\t" << f(d.alpha) << '\n';
  for (const auto& [eps, k] : d.n0_table) std::cout << "n0(" << f(eps) << ")\t" << k << '\n';
  for (const auto& msg : v.violations) std::cerr << "violation: " << msg << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral learning of hidden Markov models"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a random HMM (flat Dirichlet columns)");
  gen_cmd->add_option("--m", gen.m, "Hidden states")->required();
  gen_cmd->add_option("--n", gen.n, "Alphabet size")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->required();
  gen_cmd->add_option("--min-sigma", gen.min_sigma, "Reject until sigma_m(O), sigma_m(P21) >= this");
  gen_cmd->add_option("--out", gen.out, "Output path (default stdout)");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Sample observation triples (or sequences) from an HMM");
  sample_cmd->add_option("--model", sample.model, "HMM file")->required();
  sample_cmd->add_option("--N", sample.N, "Number of triples (or sequences)")->required();
  sample_cmd->add_option("--seed", sample.seed, "Random seed")->required();
  sample_cmd->add_option("--shards", sample.shards, "Parallel shards (shard i uses seed + i)");
  sample_cmd->add_option("--length", sample.length, "Emit N sequences of this length instead of triples");
  sample_cmd->add_option("--out", sample.out, "Output path (default stdout)");

  auto add_source = [](CLI::App* cmd, MomentSource& src) {
    cmd->add_option("--triples", src.triples, "Triples file");
    cmd->add_option("--moments", src.moments, "Moments file");
    cmd->add_option("--analytic-from", src.analytic_from, "HMM file; use its exact moments");
    cmd->add_option("--n", src.n, "Alphabet size for triples input (default: largest symbol seen)");
  };

  LearnArgs learn_args;
  auto* learn_cmd = app.add_subcommand("learn", "Learn an observable-operator model");
  add_source(learn_cmd, learn_args.source);
  learn_cmd->add_option("--m", learn_args.m, "Model rank")->required();
  learn_cmd->add_option("--out", learn_args.out, "Output path (default stdout)");
  learn_cmd->add_option("--moments-out", learn_args.moments_out, "Also write the moments used");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "L1 joint error and conditional KL against the true HMM");
  eval_cmd->add_option("--model", eval.model, "True HMM file")->required();
  eval_cmd->add_option("--oom", eval.oom, "Observable model file")->required();
  eval_cmd->add_option("--t", eval.t, "Horizon");
  eval_cmd->add_option("--mode", eval.mode, "enumeration | monte-carlo")
      ->check(CLI::IsMember({"enumeration", "monte-carlo"}));
  eval_cmd->add_option("--metric", eval.metric, "l1 | kl | both")->check(CLI::IsMember({"l1", "kl", "both"}));
  eval_cmd->add_option("--samples", eval.samples, "Monte Carlo trajectories");
  eval_cmd->add_option("--seed", eval.seed, "Random seed");

  RecoverArgs rec;
  auto* rec_cmd = app.add_subcommand("recover", "Recover explicit O, T, pi from moments");
  add_source(rec_cmd, rec.source);
  rec_cmd->add_option("--m", rec.m, "Number of states")->required();
  rec_cmd->add_option("--seed", rec.seed, "Seed for the random operator combination")->required();
  rec_cmd->add_flag("--project", rec.project, "Clip negatives and renormalize columns");
  rec_cmd->add_option("--min-gap", rec.min_gap, "Relative eigenvalue separation threshold");
  rec_cmd->add_option("--out", rec.out, "Output path (default stdout)");

  StudyArgs study;
  auto* study_cmd = app.add_subcommand("study", "Convergence study over a grid of sample sizes");
  study_cmd->add_option("--m", study.cfg.m, "Hidden states")->required();
  study_cmd->add_option("--n", study.cfg.n, "Alphabet size")->required();
  study_cmd->add_option("--seed", study.cfg.seed, "Random seed")->required();
  study_cmd->add_option("--grid", study.cfg.N_grid, "Ascending sample sizes")->delimiter(',')->required();
  study_cmd->add_option("--t", study.cfg.t, "Horizon");
  study_cmd->add_option("--repeats", study.cfg.repeats, "Repeats per grid point");
  study_cmd->add_option("--eta", study.cfg.eta, "Failure probability for the bounds");
  study_cmd->add_option("--min-sigma", study.cfg.min_sigma, "Instance conditioning threshold");
  study_cmd->add_option("--out", study.out, "Output path (default stdout)");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Per-sequence log-likelihood of a corpus");
  score_cmd->add_option("--oom", score.oom, "Observable model file")->required();
  score_cmd->add_option("--corpus", score.corpus, "Sequence corpus file")->required();
  score_cmd->add_flag("--reset", score.reset, "Restart the filter on zero-probability histories");

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Validation and spectral diagnostics of an HMM");
  inspect_cmd->add_option("--model", inspect.model, "HMM file")->required();
  inspect_cmd->add_option("--restarts", inspect.restarts, "Restarts for the gamma estimate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::usage);
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*sample_cmd) return run_sample(sample);
    if (*learn_cmd) return run_learn(learn_args);
    if (*eval_cmd) return run_eval(eval);
    if (*rec_cmd) return run_recover(rec);
    if (*study_cmd) return run_study(study);
    if (*score_cmd) return run_score(score);
    if (*inspect_cmd) return run_inspect(inspect);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
