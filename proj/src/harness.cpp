#include "bwrec/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "bwrec/csv.hpp"
#include "bwrec/rng.hpp"

namespace bwrec {

using nlohmann::json;

void ExperimentSpec::validate() const {
  if (name.empty()) throw InvalidInput("ExperimentSpec: name required");
  if (d < 1) throw InvalidInput("ExperimentSpec: d must be >= 1");
  if (trials < 1) throw InvalidInput("ExperimentSpec: trials must be >= 1");
  if (rank_list.empty() || sample_factor_list.empty() || alpha_list.empty()) {
    throw InvalidInput("ExperimentSpec: rank/sample/alpha lists must be nonempty");
  }
  if (methods.empty()) throw InvalidInput("ExperimentSpec: methods required");
  if (max_iters < 0) throw InvalidInput("ExperimentSpec: max_iters >= 0");
  if (record_every < 1) throw InvalidInput("ExperimentSpec: record_every >= 1");
  for (Index r : rank_list) {
    if (r < 1 || r > d) throw InvalidInput("ExperimentSpec: ranks must be in [1, d]");
  }
  static const std::set<std::string> known = {
      "bwgd_factored", "bwgd_full", "bwsgd",
      "egd_fixed",     "egd_linesearch", "spectral"};
  for (const auto& m : methods) {
    if (known.count(m) == 0) {
      throw InvalidInput("ExperimentSpec: unknown method '" + m + "'");
    }
  }
  if (init != "random" && init != "spectral") {
    throw InvalidInput("ExperimentSpec: init must be random or spectral");
  }
}

std::string ExperimentSpec::to_json() const {
  json j;
  j["name"] = name;
  j["d"] = d;
  j["rank_list"] = rank_list;
  j["sample_factor_list"] = sample_factor_list;
  j["sample_mode"] = sample_mode == SampleMode::kPerDimRank ? "dr" : "d";
  j["alpha_list"] = alpha_list;
  j["trials"] = trials;
  j["methods"] = methods;
  j["max_iters"] = max_iters;
  j["seed_base"] = seed_base;
  j["output_dir"] = output_dir;
  j["record_every"] = record_every;
  j["init"] = init;
  j["sgd_streaming"] = sgd_streaming;
  j["noise_sigma"] = noise_sigma;
  j["timings"] = timings;
  return j.dump(2);
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentSpec s;
  s.name = j.at("name").get<std::string>();
  s.d = j.at("d").get<Index>();
  s.rank_list = j.at("rank_list").get<std::vector<Index>>();
  s.sample_factor_list = j.at("sample_factor_list").get<std::vector<int>>();
  if (j.contains("sample_mode")) {
    const std::string m = j["sample_mode"].get<std::string>();
    if (m == "dr") {
      s.sample_mode = SampleMode::kPerDimRank;
    } else if (m == "d") {
      s.sample_mode = SampleMode::kPerDim;
    } else {
      throw InvalidInput("ExperimentSpec: sample_mode must be 'dr' or 'd'");
    }
  }
  if (j.contains("alpha_list")) s.alpha_list = j["alpha_list"].get<std::vector<double>>();
  if (j.contains("trials")) s.trials = j["trials"].get<int>();
  s.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("max_iters")) s.max_iters = j["max_iters"].get<int>();
  if (j.contains("seed_base")) s.seed_base = j["seed_base"].get<std::uint64_t>();
  if (j.contains("output_dir")) s.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("record_every")) s.record_every = j["record_every"].get<int>();
  if (j.contains("init")) s.init = j["init"].get<std::string>();
  if (j.contains("sgd_streaming")) s.sgd_streaming = j["sgd_streaming"].get<bool>();
  if (j.contains("noise_sigma")) s.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("timings")) s.timings = j["timings"].get<bool>();
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open spec: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

double err_bw_sqrt(const SymMatrix& est, const SymMatrix& truth) {
  return sqrt_diff_norm(est, truth);
}

double err_bw_sqrt_factored(const Mat& u_est, const Mat& u_true) {
  return sqrt_diff_norm_factored(u_est, u_true);
}

void save_metrics_csv(const std::vector<MetricRow>& rows,
                      const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "experiment,method,d,r,n,alpha,trial_seed,iter,energy,err_bw_sqrt,"
       "err_fro_rel,seconds\n";
  for (const MetricRow& r : rows) {
    f << r.experiment << ',' << r.method << ',' << r.d << ',' << r.r << ','
      << r.n << ',' << format_double(r.alpha) << ',' << r.trial_seed << ','
      << r.iter << ',' << format_double(r.energy) << ','
      << format_double(r.err_bw_sqrt) << ',' << format_double(r.err_fro_rel)
      << ',' << format_double(r.seconds) << '\n';
  }
}

namespace {

struct TrialContext {
  const ExperimentSpec* spec = nullptr;
  GroundTruth gt;
  std::optional<SensingSet> raw;
  std::optional<SensingSet> white;
  Mat truth_white;  // L^T U_true
  std::uint64_t trial_seed = 0;
  Index n = 0;
  double alpha = 0.0;
};

// Final-row exact error against the planted matrix, original coordinates.
void fill_final_errors(const TrialContext& ctx, const Mat& est_factor,
                       bool have_factor, const SymMatrix& est_full,
                       MetricRow* row) {
  SymMatrix est = have_factor
                      ? SymMatrix(est_factor * est_factor.transpose())
                      : est_full;
  row->err_bw_sqrt = have_factor
                         ? err_bw_sqrt_factored(est_factor, ctx.gt.factor)
                         : err_bw_sqrt(est, ctx.gt.s);
  const double s_norm = ctx.gt.s.norm();
  row->err_fro_rel =
      s_norm > 0.0 ? (est.mat() - ctx.gt.s.mat()).norm() / s_norm : 0.0;
}

MetricRow base_row(const TrialContext& ctx, const std::string& method,
                   Index r) {
  MetricRow row;
  row.experiment = ctx.spec->name;
  row.method = method;
  row.d = ctx.spec->d;
  row.r = r;
  row.n = ctx.n;
  row.alpha = ctx.alpha;
  row.trial_seed = ctx.trial_seed;
  return row;
}

// Transcribes all but the last trace row (the caller emits the final row
// with exact original-coordinate errors in its place).
void append_trace_rows(const TrialContext& ctx, const std::string& method,
                       Index r, const Trace& trace,
                       std::vector<MetricRow>* rows) {
  for (size_t i = 0; i + 1 < trace.rows.size(); ++i) {
    const TraceRow& t = trace.rows[i];
    MetricRow row = base_row(ctx, method, r);
    row.iter = t.iter;
    row.energy = t.energy;
    row.err_bw_sqrt = t.err_bw_sqrt;  // solver-coordinates proxy
    row.err_fro_rel = std::nan("");
    row.seconds = ctx.spec->timings ? t.seconds : 0.0;
    rows->push_back(std::move(row));
  }
}

void run_method(const TrialContext& ctx, const std::string& method, Index r,
                std::vector<MetricRow>* rows) {
  const ExperimentSpec& spec = *ctx.spec;
  const std::uint64_t init_seed = substream(ctx.trial_seed, 0xA11);

  if (method == "spectral") {
    Mat est = spectral_factor(*ctx.raw, r);
    MetricRow row = base_row(ctx, method, r);
    row.iter = 0;
    row.energy = egd_energy(est, *ctx.raw);
    fill_final_errors(ctx, est, true, SymMatrix(), &row);
    rows->push_back(std::move(row));
    return;
  }

  if (method == "egd_fixed" || method == "egd_linesearch") {
    EgdConfig cfg;
    cfg.linesearch = method == "egd_linesearch";
    cfg.rank = r;
    cfg.max_iters = spec.max_iters;
    cfg.record_every = spec.record_every;
    cfg.seed = init_seed;
    if (spec.init == "spectral") cfg.init = InitKind::kSpectral;
    SolveResult res = egd_solve(*ctx.raw, cfg, &ctx.gt.factor);
    append_trace_rows(ctx, method, r, res.trace, rows);
    MetricRow final_row = base_row(ctx, method, r);
    final_row.iter = res.iterations;
    final_row.energy = res.trace.rows.back().energy;
    final_row.seconds = spec.timings ? res.trace.rows.back().seconds : 0.0;
    fill_final_errors(ctx, res.factor, true, SymMatrix(), &final_row);
    rows->push_back(std::move(final_row));
    return;
  }

  if (method == "bwsgd" && spec.sgd_streaming) {
    Mat init;
    if (spec.init == "spectral") {
      init = spectral_factor(*ctx.raw, r);
    } else {
      Rng rng(substream(ctx.trial_seed, 0xF0));
      init = rng.gaussian_matrix(spec.d, r);
    }
    const double eta = 1.0 / std::sqrt(static_cast<double>(spec.max_iters));
    auto points = run_sgd_stream(ctx.gt, spec.max_iters, eta,
                                 substream(ctx.trial_seed, 0xF1), *ctx.raw,
                                 init);
    for (const StreamPoint& p : points) {
      MetricRow row = base_row(ctx, method, r);
      row.iter = static_cast<int>(p.step);
      row.energy = p.energy;
      row.err_bw_sqrt = p.err_bw;
      row.err_fro_rel = std::nan("");
      rows->push_back(std::move(row));
    }
    return;
  }

  // Geometric methods run in whitened coordinates.
  SolverConfig cfg;
  cfg.rank = r;
  cfg.max_iters = spec.max_iters;
  cfg.record_every = spec.record_every;
  cfg.seed = init_seed;
  if (method == "bwgd_factored") {
    cfg.algorithm = Algorithm::kBwGdFactored;
  } else if (method == "bwgd_full") {
    cfg.algorithm = Algorithm::kBwGdFull;
  } else if (method == "bwsgd") {
    cfg.algorithm = Algorithm::kBwSgd;
    cfg.schedule = StepSchedule::kSgdInvSqrt;
    cfg.record_every = std::max(1, static_cast<int>(ctx.white->count() / 20));
  } else {
    throw InvalidInput("run_experiment: unknown method '" + method + "'");
  }
  if (spec.init == "spectral") {
    // Spectral factor belongs to the raw coordinates; move it to whitened.
    cfg.init = InitKind::kExplicit;
    cfg.init_factor = whiten_factor(spectral_factor(*ctx.raw, r),
                                    *ctx.white->whitening());
  }
  SolveResult res = solve(*ctx.white, cfg, &ctx.truth_white);
  append_trace_rows(ctx, method, r, res.trace, rows);

  MetricRow final_row = base_row(ctx, method, r);
  final_row.iter = res.iterations;
  final_row.energy = res.trace.rows.back().energy;
  final_row.seconds = spec.timings ? res.trace.rows.back().seconds : 0.0;
  const CholeskyFactor& l = *ctx.white->whitening();
  if (res.factored) {
    Mat est = unwhiten_factor(res.factor, l);
    fill_final_errors(ctx, est, true, SymMatrix(), &final_row);
  } else {
    SymMatrix est = unwhiten_estimate(res.full, l);
    fill_final_errors(ctx, Mat(), false, est, &final_row);
  }
  rows->push_back(std::move(final_row));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult out;

  std::uint64_t cell_index = 0;
  for (Index r : spec.rank_list) {
    for (int c : spec.sample_factor_list) {
      for (double alpha : spec.alpha_list) {
        const Index n = spec.sample_mode == SampleMode::kPerDimRank
                            ? static_cast<Index>(c) * spec.d * r
                            : static_cast<Index>(c) * spec.d;
        for (int trial = 0; trial < spec.trials; ++trial) {
          const std::uint64_t trial_seed =
              spec.seed_base + cell_index * 10007ULL +
              static_cast<std::uint64_t>(trial);
          try {
            TrialContext ctx;
            ctx.spec = &spec;
            ctx.trial_seed = trial_seed;
            ctx.n = n;
            ctx.alpha = alpha;
            ctx.gt = generate_ground_truth(spec.d, r, SpectrumSpec::Alpha(alpha),
                                           substream(trial_seed, 0x61));
            SensingSet raw = sense(ctx.gt, n, substream(trial_seed, 0x62));
            if (spec.noise_sigma > 0.0) {
              Rng noise_rng(substream(trial_seed, 0x63));
              Vec noisy = raw.values();
              for (Index i = 0; i < noisy.size(); ++i) {
                noisy(i) =
                    std::max(0.0, noisy(i) + spec.noise_sigma * noise_rng.gaussian());
              }
              raw = SensingSet(raw.vectors(), std::move(noisy));
            }
            ctx.raw = std::move(raw);

            const bool needs_whitening =
                std::any_of(spec.methods.begin(), spec.methods.end(),
                            [&](const std::string& m) {
                              return m.rfind("bwgd", 0) == 0 ||
                                     (m == "bwsgd" && !spec.sgd_streaming);
                            });
            if (needs_whitening) {
              ctx.white = whiten(*ctx.raw);
              ctx.truth_white =
                  whiten_factor(ctx.gt.factor, *ctx.white->whitening());
            }
            for (const std::string& method : spec.methods) {
              run_method(ctx, method, r, &out.rows);
            }
          } catch (const std::exception&) {
            // Status row: iter = -1 marks a failed trial; the run continues.
            MetricRow row;
            row.experiment = spec.name;
            row.method = "status";
            row.d = spec.d;
            row.r = r;
            row.n = n;
            row.alpha = alpha;
            row.trial_seed = trial_seed;
            row.iter = -1;
            row.energy = std::nan("");
            row.err_bw_sqrt = std::nan("");
            row.err_fro_rel = std::nan("");
            out.rows.push_back(std::move(row));
          }
        }
        ++cell_index;
      }
    }
  }

  namespace fs = std::filesystem;
  fs::create_directories(spec.output_dir);
  out.csv_path = (fs::path(spec.output_dir) / (spec.name + ".csv")).string();
  out.meta_path =
      (fs::path(spec.output_dir) / (spec.name + ".meta.json")).string();
  save_metrics_csv(out.rows, out.csv_path);

  out.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  json meta;
  meta["spec"] = json::parse(spec.to_json());
  meta["library_version"] = "0.1.0";
  meta["rows"] = out.rows.size();
  meta["wall_seconds"] = out.wall_seconds;
  meta["timings_in_csv"] = spec.timings;
  std::ofstream mf(out.meta_path);
  mf << meta.dump(2) << '\n';
  return out;
}

std::map<std::string, ExperimentSpec> builtin_suites() {
  std::map<std::string, ExperimentSpec> suites;

  {
    ExperimentSpec s;
    s.name = "conv1";
    s.init = "random";
    s.d = 32;
    s.rank_list = {1, 4, 16};
    s.sample_factor_list = {3, 10, 20};
    s.sample_mode = SampleMode::kPerDimRank;
    s.alpha_list = {0.0};
    s.trials = 20;
    s.methods = {"bwgd_factored", "egd_fixed", "spectral"};
    s.max_iters = 200;
    s.record_every = 25;
    s.seed_base = 1;
    suites[s.name] = s;
  }
  {
    ExperimentSpec s;
    s.name = "conv2";
    s.init = "random";
    s.d = 32;
    s.rank_list = {2, 4, 16};
    s.sample_factor_list = {5};
    s.sample_mode = SampleMode::kPerDimRank;
    s.alpha_list = {0.0, 1.0, 2.0};
    s.trials = 20;
    s.methods = {"bwgd_factored", "bwgd_full", "egd_fixed"};
    s.max_iters = 200;
    s.record_every = 25;
    s.seed_base = 2;
    suites[s.name] = s;
  }
  {
    ExperimentSpec s;
    s.name = "samp";
    s.init = "random";
    s.d = 64;
    s.rank_list = {1, 5, 9, 13, 17};
    s.sample_factor_list = {4, 8, 12, 16, 20};
    s.sample_mode = SampleMode::kPerDim;
    s.alpha_list = {0.0};
    s.trials = 10;
    s.methods = {"bwgd_factored", "egd_fixed"};
    s.max_iters = 200;
    s.record_every = 200;  // error at the final iteration only
    s.seed_base = 3;
    suites[s.name] = s;
  }
  {
    ExperimentSpec s;
    s.name = "highdim";
    s.init = "random";
    s.d = 512;
    s.rank_list = {8};
    s.sample_factor_list = {3};
    s.sample_mode = SampleMode::kPerDimRank;
    s.alpha_list = {0.0};
    s.trials = 3;
    s.methods = {"bwgd_factored", "egd_fixed"};
    s.max_iters = 200;
    s.record_every = 50;
    s.seed_base = 4;
    suites[s.name] = s;
  }
  {
    ExperimentSpec s;
    s.name = "sgd_rate";
    s.init = "random";
    s.d = 20;
    s.rank_list = {1, 2, 4, 8};
    s.sample_factor_list = {20};  // evaluation set of n = d^2 samples
    s.sample_mode = SampleMode::kPerDim;
    s.alpha_list = {0.0};
    s.trials = 5;
    s.methods = {"bwsgd"};
    s.max_iters = 5000;  // stream length
    s.sgd_streaming = true;
    s.seed_base = 5;
    suites[s.name] = s;
  }
  return suites;
}

std::vector<StreamPoint> run_sgd_stream(const GroundTruth& gt, long steps,
                                        double eta, std::uint64_t seed,
                                        const SensingSet& eval_set,
                                        const Mat& init_factor,
                                        int checkpoints) {
  if (steps < 1) throw InvalidInput("run_sgd_stream: need steps >= 1");
  const Index d = gt.factor.rows();
  if (init_factor.rows() != d) {
    throw InvalidInput("run_sgd_stream: init factor dimension mismatch");
  }

  std::set<long> marks;
  const double lo = 0.0;
  const double hi = std::log10(static_cast<double>(steps));
  for (int i = 0; i < checkpoints; ++i) {
    const double f = checkpoints > 1
                         ? lo + (hi - lo) * i / static_cast<double>(checkpoints - 1)
                         : hi;
    marks.insert(std::min<long>(steps, std::max<long>(1, std::llround(std::pow(10.0, f)))));
  }
  marks.insert(steps);

  Rng rng(seed);
  Mat u = init_factor;
  std::vector<StreamPoint> out;
  for (long k = 1; k <= steps; ++k) {
    Vec x = rng.gaussian_vector(d);
    const double y = (gt.factor.transpose() * x).squaredNorm();
    u = bwsgd_step(u, x, y, eta);
    if (marks.count(k) > 0) {
      Mat applied = fixed_point_map_apply(u, eval_set);
      StreamPoint p;
      p.step = k;
      p.energy = energy_factored(u, eval_set);
      p.grad_riem2 = (u - applied).squaredNorm();
      p.err_bw = factor_bw_dist(u, gt.factor);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace bwrec
