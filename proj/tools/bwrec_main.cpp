// Command-line front end: gen | solve | bench | rip | cert.
// stdout carries machine-parseable key=value lines; prose goes to stderr.
// Exit codes: 0 success, 1 runtime/IO failure, 2 usage error.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bwrec/baselines.hpp"
#include "bwrec/csv.hpp"
#include "bwrec/harness.hpp"
#include "bwrec/rng.hpp"
#include "bwrec/sensing.hpp"
#include "bwrec/solvers.hpp"

namespace {

using namespace bwrec;

int cmd_gen(Index d, Index r, Index n, double alpha, std::uint64_t seed,
            const std::string& out) {
  GroundTruth gt = generate_ground_truth(d, r, SpectrumSpec::Alpha(alpha),
                                         substream(seed, 0x61));
  SensingSet data = sense(gt, n, substream(seed, 0x62));
  const std::string data_path = out + ".data.csv";
  const std::string truth_path = out + ".truth.csv";
  save_sensing_csv(data, data_path);
  save_matrix_csv(gt.factor, truth_path);
  std::cout << "data=" << data_path << '\n';
  std::cout << "truth=" << truth_path << '\n';
  std::cout << "d=" << d << '\n' << "r=" << r << '\n' << "n=" << n << '\n';
  return 0;
}

struct SolveArgs {
  std::string data_path;
  std::string method = "bwgd_factored";
  Index rank = 1;
  double eta = 1.0;
  bool eta_given = false;
  int max_iters = 500;
  double tol = kDefaultGradTol;
  std::string init = "random";
  std::string init_factor_path;  // explicit start, original coordinates
  std::uint64_t seed = 0;
  std::string trace_path;
  std::string truth_path;
  std::string estimate_path = "estimate.csv";
};

int cmd_solve(const SolveArgs& a) {
  SensingSet raw = load_sensing_csv(a.data_path);
  Mat truth;
  const bool have_truth = !a.truth_path.empty();
  if (have_truth) truth = load_matrix_csv(a.truth_path);

  const bool is_bw = a.method.rfind("bwgd", 0) == 0 || a.method == "bwsgd";
  const bool is_egd = a.method == "egd_fixed" || a.method == "egd_linesearch";
  if (!is_bw && !is_egd && a.method != "spectral") {
    throw InvalidInput("unknown method '" + a.method + "'");
  }

  Trace trace;
  Mat estimate;
  double final_energy = 0.0;
  int iterations = 0;

  if (a.method == "spectral") {
    if (a.eta_given) {
      std::cerr << "note: --eta is ignored by the spectral method\n";
    }
    estimate = spectral_factor(raw, a.rank);
    final_energy = egd_energy(estimate, raw);
    TraceRow row;
    row.iter = 0;
    row.energy = final_energy;
    row.grad_fro = std::nan("");
    row.grad_riem2 = std::nan("");
    row.err_bw_sqrt =
        have_truth ? err_bw_sqrt_factored(estimate, truth) : std::nan("");
    trace.rows.push_back(row);
  } else if (is_egd) {
    EgdConfig cfg;
    cfg.linesearch = a.method == "egd_linesearch";
    cfg.rank = a.rank;
    cfg.max_iters = a.max_iters;
    cfg.tol = a.tol;
    cfg.seed = a.seed;
    if (a.init == "spectral") cfg.init = InitKind::kSpectral;
    if (!a.init_factor_path.empty()) {
      cfg.init = InitKind::kExplicit;
      cfg.init_factor = load_matrix_csv(a.init_factor_path);
    }
    SolveResult res =
        egd_solve(raw, cfg, have_truth ? &truth : nullptr);
    estimate = res.factor;
    trace = res.trace;
    final_energy = res.trace.rows.back().energy;
    iterations = res.iterations;
  } else {
    // Geometric methods: whiten, solve, return to original coordinates.
    const bool already_white = raw.whitened();
    std::optional<SensingSet> white;
    Mat truth_solver = truth;
    if (already_white) {
      std::cerr << "note: input is already whitened; the estimate stays in "
                   "whitened coordinates\n";
    } else {
      white = whiten(raw);
      if (have_truth) {
        truth_solver = whiten_factor(truth, *white->whitening());
      }
    }
    const SensingSet& work = already_white ? raw : *white;

    SolverConfig cfg;
    cfg.rank = a.rank;
    cfg.max_iters = a.max_iters;
    cfg.grad_tol = a.tol;
    cfg.seed = a.seed;
    if (a.method == "bwgd_full") {
      cfg.algorithm = Algorithm::kBwGdFull;
    } else if (a.method == "bwsgd") {
      cfg.algorithm = Algorithm::kBwSgd;
      cfg.schedule =
          a.eta_given ? StepSchedule::kConstant : StepSchedule::kSgdInvSqrt;
      cfg.record_every = std::max(1, static_cast<int>(work.count() / 20));
    }
    if (a.eta_given) cfg.eta = a.eta;
    if (a.init == "spectral") {
      if (already_white) {
        cfg.init = InitKind::kSpectral;
      } else {
        cfg.init = InitKind::kExplicit;
        cfg.init_factor =
            whiten_factor(spectral_factor(raw, a.rank), *white->whitening());
      }
    }
    if (!a.init_factor_path.empty()) {
      Mat start = load_matrix_csv(a.init_factor_path);
      cfg.init = InitKind::kExplicit;
      cfg.init_factor =
          already_white ? start : whiten_factor(start, *white->whitening());
    }
    SolveResult res =
        solve(work, cfg, have_truth ? &truth_solver : nullptr);
    trace = res.trace;
    final_energy = res.trace.rows.back().energy;
    iterations = res.iterations;
    if (res.factored) {
      estimate = already_white
                     ? res.factor
                     : unwhiten_factor(res.factor, *white->whitening());
    } else {
      SymMatrix full = already_white
                           ? res.full
                           : unwhiten_estimate(res.full, *white->whitening());
      EigDecomp e = sym_eig(full);
      estimate = e.vectors * e.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    if (res.trace.rank_collapse) {
      std::cerr << "warning: factor rank collapse detected during the run\n";
    }
  }

  save_matrix_csv(estimate, a.estimate_path);
  if (!a.trace_path.empty()) trace.save_csv(a.trace_path);

  std::cout << "method=" << a.method << '\n';
  std::cout << "iterations=" << iterations << '\n';
  std::cout << "final_energy=" << format_double(final_energy) << '\n';
  std::cout << "estimate=" << a.estimate_path << '\n';
  if (have_truth) {
    const double err = err_bw_sqrt_factored(estimate, truth);
    std::cout << "final_err_bw_sqrt=" << format_double(err) << '\n';
  }
  return 0;
}

int cmd_bench(const std::string& suite, const std::string& spec_path,
              const std::string& out_dir, std::uint64_t seed, bool seed_given,
              bool timings) {
  ExperimentSpec spec;
  if (!spec_path.empty()) {
    spec = ExperimentSpec::from_json_file(spec_path);
  } else {
    auto suites = builtin_suites();
    auto it = suites.find(suite);
    if (it == suites.end()) {
      throw InvalidInput("unknown suite '" + suite + "'");
    }
    spec = it->second;
  }
  if (!out_dir.empty()) spec.output_dir = out_dir;
  if (seed_given) spec.seed_base = seed;
  if (timings) spec.timings = true;

  ExperimentResult res = run_experiment(spec);
  std::cout << "csv=" << res.csv_path << '\n';
  std::cout << "meta=" << res.meta_path << '\n';
  std::cout << "rows=" << res.rows.size() << '\n';
  std::cerr << "bench '" << spec.name << "' finished in " << res.wall_seconds
            << " s\n";
  return 0;
}

int cmd_rip(const std::string& data_path, Index r, int trials,
            std::uint64_t seed) {
  SensingSet data = load_sensing_csv(data_path);
  RipCheckResult res = rip_check(data, trials, r, seed);
  std::cout << "min_ratio=" << format_double(res.min_ratio) << '\n';
  std::cout << "max_ratio=" << format_double(res.max_ratio) << '\n';
  return 0;
}

int cmd_cert(const std::string& data_path, const std::string& estimate_path,
             double tol) {
  SensingSet raw = load_sensing_csv(data_path);
  Mat estimate = load_matrix_csv(estimate_path);
  Certificate cert;
  if (raw.whitened()) {
    cert = stationarity_certificate(estimate, raw, tol);
  } else {
    SensingSet white = whiten(raw);
    Mat est_white = whiten_factor(estimate, *white.whitening());
    cert = stationarity_certificate(est_white, white, tol);
  }
  std::cout << "foc1_residual=" << format_double(cert.foc1_residual) << '\n';
  std::cout << "foc2_max_excess=" << format_double(cert.foc2_max_excess)
            << '\n';
  std::cout << "certified=" << (cert.certified ? "true" : "false") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank PSD recovery from rank-one quadratic measurements"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  Index g_d = 8, g_r = 1, g_n = 64;
  double g_alpha = 0.0;
  std::uint64_t g_seed = 0;
  std::string g_out = "dataset";
  gen->add_option("--d", g_d, "ambient dimension")->check(CLI::PositiveNumber);
  gen->add_option("--r", g_r, "planted rank")->check(CLI::PositiveNumber);
  gen->add_option("--n", g_n, "number of measurements")
      ->check(CLI::PositiveNumber);
  gen->add_option("--alpha", g_alpha, "spectrum decay exponent");
  gen->add_option("--seed", g_seed, "RNG seed");
  gen->add_option("--out", g_out, "output path prefix");

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Run a recovery method");
  SolveArgs sa;
  solve_cmd->add_option("--data", sa.data_path, "sensing CSV")->required();
  solve_cmd->add_option("--method", sa.method,
                        "bwgd_factored|bwgd_full|bwsgd|egd_fixed|"
                        "egd_linesearch|spectral");
  solve_cmd->add_option("--rank", sa.rank, "solver rank")
      ->check(CLI::PositiveNumber);
  auto* eta_opt = solve_cmd->add_option("--eta", sa.eta, "step size in (0,1]");
  solve_cmd->add_option("--max-iters", sa.max_iters, "iteration budget");
  solve_cmd->add_option("--tol", sa.tol, "squared Riemannian gradient tolerance");
  solve_cmd->add_option("--init", sa.init, "random|spectral");
  solve_cmd->add_option("--init-factor", sa.init_factor_path,
                        "explicit starting factor CSV (original coordinates)");
  solve_cmd->add_option("--seed", sa.seed, "RNG seed");
  solve_cmd->add_option("--trace", sa.trace_path, "trace CSV output path");
  solve_cmd->add_option("--truth", sa.truth_path, "ground-truth factor CSV");
  solve_cmd->add_option("--estimate", sa.estimate_path,
                        "estimate factor CSV output path");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite");
  std::string b_suite, b_spec, b_out;
  std::uint64_t b_seed = 0;
  bool b_timings = false;
  bench->add_option("--suite", b_suite,
                    "conv1|conv2|samp|highdim|sgd_rate");
  bench->add_option("--spec", b_spec, "experiment spec JSON file");
  bench->add_option("--out", b_out, "output directory");
  auto* b_seed_opt = bench->add_option("--seed", b_seed, "seed_base override");
  bench->add_flag("--timings", b_timings,
                  "record real wall seconds in the CSV (breaks byte "
                  "reproducibility)");

  // rip
  auto* rip = app.add_subcommand("rip", "Paired-difference measurement check");
  std::string r_data;
  Index r_r = 1;
  int r_trials = 20;
  std::uint64_t r_seed = 0;
  rip->add_option("--data", r_data, "sensing CSV")->required();
  rip->add_option("--r", r_r, "perturbation rank")->check(CLI::PositiveNumber);
  rip->add_option("--trials", r_trials, "random directions to test");
  rip->add_option("--seed", r_seed, "RNG seed");

  // cert
  auto* cert = app.add_subcommand("cert", "Stationarity certificate");
  std::string c_data, c_estimate;
  double c_tol = 1e-8;
  cert->add_option("--data", c_data, "sensing CSV")->required();
  cert->add_option("--estimate", c_estimate, "estimate factor CSV")
      ->required();
  cert->add_option("--tol", c_tol, "certificate tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help
    }
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(g_d, g_r, g_n, g_alpha, g_seed, g_out);
    if (solve_cmd->parsed()) {
      sa.eta_given = eta_opt->count() > 0;
      return cmd_solve(sa);
    }
    if (bench->parsed()) {
      if (b_suite.empty() == b_spec.empty()) {
        std::cerr << "error: pass exactly one of --suite or --spec\n";
        return 2;
      }
      return cmd_bench(b_suite, b_spec, b_out, b_seed, b_seed_opt->count() > 0,
                       b_timings);
    }
    if (rip->parsed()) return cmd_rip(r_data, r_r, r_trials, r_seed);
    if (cert->parsed()) return cmd_cert(c_data, c_estimate, c_tol);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
