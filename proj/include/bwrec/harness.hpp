#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bwrec/baselines.hpp"
#include "bwrec/sensing.hpp"
#include "bwrec/solvers.hpp"

namespace bwrec {

// How the per-cell sample count is derived from the sample factor c.
enum class SampleMode { kPerDimRank, kPerDim };  // n = c*d*r  |  n = c*d

struct ExperimentSpec {
  std::string name;
  Index d = 0;
  std::vector<Index> rank_list;
  std::vector<int> sample_factor_list;
  SampleMode sample_mode = SampleMode::kPerDimRank;
  std::vector<double> alpha_list{0.0};
  int trials = 1;
  std::vector<std::string> methods;  // bwgd_factored | bwgd_full | bwsgd |
                                     // egd_fixed | egd_linesearch | spectral
  int max_iters = 200;
  std::uint64_t seed_base = 0;
  std::string output_dir = "bench_out";
  int record_every = 10;
  std::string init = "spectral";  // random | spectral
  bool sgd_streaming = false;   // bwsgd draws fresh samples instead of epochs
  double noise_sigma = 0.0;     // optional additive noise on y (clamped at 0)
  bool timings = false;         // write real wall seconds into the CSV

  void validate() const;
  std::string to_json() const;
  static ExperimentSpec from_json_text(const std::string& text);
  static ExperimentSpec from_json_file(const std::string& path);
};

struct MetricRow {
  std::string experiment;
  std::string method;
  Index d = 0;
  Index r = 0;
  Index n = 0;
  double alpha = 0.0;
  std::uint64_t trial_seed = 0;
  int iter = 0;
  double energy = 0.0;
  double err_bw_sqrt = 0.0;
  double err_fro_rel = 0.0;
  double seconds = 0.0;
};

// ||est^{1/2} - truth^{1/2}||_F.
double err_bw_sqrt(const SymMatrix& est, const SymMatrix& truth);
// Same metric from factors; exact, r x r eigenproblems only.
double err_bw_sqrt_factored(const Mat& u_est, const Mat& u_true);

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::string csv_path;
  std::string meta_path;
  double wall_seconds = 0.0;
};

// Runs every (rank, sample factor, alpha, trial) cell of the spec:
// generate, sense, whiten, run each method, unwhiten the geometric methods,
// and write one CSV plus a JSON metadata file. Deterministic given seed_base
// (timings go to the metadata unless spec.timings is set).
ExperimentResult run_experiment(const ExperimentSpec& spec);

std::map<std::string, ExperimentSpec> builtin_suites();

struct StreamPoint {
  long step = 0;
  double energy = 0.0;      // barycenter energy on the evaluation set
  double grad_riem2 = 0.0;  // measured on the evaluation set
  double err_bw = 0.0;      // aligned-factor distance to the planted factor
};

// Streaming stochastic descent with fresh Gaussian samples drawn from the
// planted model; gradient norms are estimated on a fixed evaluation set at
// roughly logarithmically spaced checkpoints.
std::vector<StreamPoint> run_sgd_stream(const GroundTruth& gt, long steps,
                                        double eta, std::uint64_t seed,
                                        const SensingSet& eval_set,
                                        const Mat& init_factor,
                                        int checkpoints = 40);

void save_metrics_csv(const std::vector<MetricRow>& rows,
                      const std::string& path);

}  // namespace bwrec
