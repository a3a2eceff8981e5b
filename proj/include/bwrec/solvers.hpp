#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bwrec/bw_geometry.hpp"
#include "bwrec/sensing.hpp"
#include "bwrec/types.hpp"

namespace bwrec {

inline constexpr double kDefaultSafeguardEps = 1e-14;
inline constexpr double kDefaultGradTol = 1e-18;

// Per-sample reduction order. Sequential is the default; the pairwise tree
// splits samples into fixed blocks (possibly evaluated in parallel) and
// combines them in a fixed order, so both modes are reproducible.
enum class ReductionMode { kSequential, kPairwiseTree };

enum class Algorithm { kBwGdFull, kBwGdFactored, kBwSgd };
enum class InitKind { kRandom, kSpectral, kExplicit };
enum class StepSchedule { kConstant, kSgdInvSqrt };

struct SolverConfig {
  Algorithm algorithm = Algorithm::kBwGdFactored;
  Index rank = 1;
  StepSchedule schedule = StepSchedule::kConstant;
  double eta = 1.0;  // constant schedule; must be in (0, 1]
  int max_iters = 500;
  double grad_tol = kDefaultGradTol;  // on ||grad||^2_Sigma
  InitKind init = InitKind::kRandom;
  double init_scale = 1.0;
  Mat init_factor;  // used when init == kExplicit
  std::uint64_t seed = 0;
  double safeguard_eps = kDefaultSafeguardEps;
  int record_every = 1;
  int epochs = 1;  // BWSGD passes over the data
  ReductionMode reduction = ReductionMode::kSequential;

  void validate() const;
};

struct TraceRow {
  int iter = 0;
  double energy = 0.0;
  double grad_fro = 0.0;
  double grad_riem2 = 0.0;
  double err_bw_sqrt = 0.0;  // NaN when no ground truth was supplied
  double seconds = 0.0;
};

struct Trace {
  std::vector<TraceRow> rows;
  bool rank_collapse = false;  // sigma_r(U) fell below 1e-12 * sigma_1
  bool step_failure = false;   // line search exhausted (baselines)
  bool diverged = false;       // energy left the finite range (baselines)

  void save_csv(const std::string& path) const;
};

struct SolveResult {
  bool factored = true;
  Mat factor;      // d x r when factored
  SymMatrix full;  // d x d when not factored
  Trace trace;
  int iterations = 0;

  SymMatrix as_matrix() const {
    return factored ? SymMatrix(factor * factor.transpose()) : full;
  }
};

// Barycenter energy of the atoms y_i z_i z_i^T:
//   F(Sigma) = (1/2n) sum_i [Tr Sigma + y_i ||z_i||^2
//                            - 2 sqrt(y_i z_i^T Sigma z_i)].
double energy(const SymMatrix& sigma, const SensingSet& data);
double energy_factored(const Mat& u, const SensingSet& data);

// Componentwise square-root least squares (1/2n) || sqrt(A(Sigma)) - sqrt(y) ||^2.
// Differs from `energy` by a Sigma-independent constant on whitened data.
double energy_sqrt_residual(const SymMatrix& sigma, const SensingSet& data);

// Fixed-point map of the barycenter energy:
//   (1/n) sum_i sqrt(y_i) z_i z_i^T / sqrt(z_i^T Sigma z_i).
// Samples with z_i^T Sigma z_i <= eps * ||z_i||^2 * Tr(Sigma) contribute zero
// (subgradient choice at rank-deficient Sigma).
SymMatrix fixed_point_map(const SymMatrix& sigma, const SensingSet& data,
                          double safeguard_eps = kDefaultSafeguardEps,
                          ReductionMode mode = ReductionMode::kSequential);

// Action of the fixed-point map on a factor without forming the d x d map:
// returns fixed_point_map(U U^T) * U in O(n d r).
Mat fixed_point_map_apply(const Mat& u, const SensingSet& data,
                          double safeguard_eps = kDefaultSafeguardEps,
                          ReductionMode mode = ReductionMode::kSequential);

// Energy gradient I - fixed_point_map(Sigma).
SymMatrix energy_grad(const SymMatrix& sigma, const SensingSet& data,
                      double safeguard_eps = kDefaultSafeguardEps);

// One geodesic gradient step on the full matrix:
//   Sigma+ = (I - eta grad) Sigma (I - eta grad).
SymMatrix bwgd_step_full(const SymMatrix& sigma, const SensingSet& data,
                         double eta,
                         double safeguard_eps = kDefaultSafeguardEps);

// Same step on the factor: U+ = ((1 - eta) I + eta fixed_point_map) U,
// accumulated as (sqrt(y_i)/||U^T z_i||) z_i (z_i^T U) in O(n d r).
Mat bwgd_step_factored(const Mat& u, const SensingSet& data, double eta,
                       double safeguard_eps = kDefaultSafeguardEps);

// Single-sample stochastic step:
//   U+ = (1 - eta) U + eta (sqrt(y)/||U^T z||) z (z^T U).
Mat bwsgd_step(const Mat& u, const Vec& z, double y, double eta,
               double safeguard_eps = kDefaultSafeguardEps);

// Spectral factor from the data's own vectors: rank-r Ritz reconstruction of
// (1/2n) sum_i y_i (z_i z_i^T - I) with negative Ritz values clipped.
RitzPairs spectral_ritz(const SensingSet& data, Index r, int iters = 200,
                        std::uint64_t seed = 0x5EEDBA5Eu);
Mat spectral_init_factor(const SensingSet& data, Index r);

// Runs the configured algorithm until ||grad||^2_Sigma <= grad_tol or
// max_iters. A ground-truth factor, when given, populates the trace error
// column (factored runs use the aligned-factor distance; full runs the
// square-root metric).
SolveResult solve(const SensingSet& data, const SolverConfig& config,
                  const Mat* truth_factor = nullptr);

struct Certificate {
  double foc1_residual = 0.0;   // ||P map P - P||_F on the range of Sigma
  double foc2_max_excess = 0.0; // max(0, lambda_1(map) - 1)
  bool certified = false;
};

Certificate stationarity_certificate(const SymMatrix& sigma,
                                     const SensingSet& data, double tol);
Certificate stationarity_certificate(const Mat& u, const SensingSet& data,
                                     double tol);

// Central second difference (f(t0-h) - 2 f(t0) + f(t0+h)) / h^2.
double second_difference(const std::function<double(double)>& f, double t0,
                         double h);

// Second difference of the energy along the geodesic from s0 to s1,
// probing t in {0, h, 2h}. Diagnostic only.
double geodesic_second_derivative(const SymMatrix& s0, const SymMatrix& s1,
                                  const SensingSet& data, double h,
                                  GeodesicKind kind);

}  // namespace bwrec
