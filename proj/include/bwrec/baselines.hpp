#pragma once

#include <cstdint>

#include "bwrec/solvers.hpp"

namespace bwrec {

// Euclidean gradient descent on the factored least-squares energy
//   f(U) = (1/2n) || A(U U^T) - y ||^2.
struct EgdConfig {
  double step = 0.0;       // <= 0 selects 0.25 / lambda_hat_1 automatically
  bool linesearch = false; // Armijo backtracking instead of a fixed step
  double ls_init_step = 1.0;
  double ls_shrink = 0.5;
  double ls_armijo_c = 1e-4;
  int max_iters = 500;
  double tol = kDefaultGradTol;  // on ||grad||_F^2
  Index rank = 1;
  InitKind init = InitKind::kRandom;
  double init_scale = 1.0;
  Mat init_factor;
  std::uint64_t seed = 0;
  int record_every = 1;

  void validate() const;
};

double egd_energy(const Mat& u, const SensingSet& data);

// Fixed step for the quartic least-squares energy. The local curvature
// scales with both the top eigenvalue and the trace of the starting point
// U0 U0^T (plus the planted scale), so the rule is
//   0.1 / max(lambda_hat_1, lambda_1(U0 U0^T) + Tr(U0 U0^T)).
double egd_auto_step(const SensingSet& data, const Mat& u0);

// (2/n) sum_i (z_i^T U U^T z_i - y_i) z_i (z_i^T U).
Mat egd_grad(const Mat& u, const SensingSet& data);

Mat egd_step(const Mat& u, const SensingSet& data, double step);

SolveResult egd_solve(const SensingSet& data, const EgdConfig& config,
                      const Mat* truth_factor = nullptr);

// Rank-r approximation of (1/2n) sum_i y_i (z_i z_i^T - I) via subspace
// iteration; negative Ritz values are clipped to zero. Expects unwhitened
// (standard Gaussian) sensing vectors.
SymMatrix spectral_estimator(const SensingSet& data, Index r);
Mat spectral_factor(const SensingSet& data, Index r);

// Top Ritz value magnitude of the same matrix; used for step sizing.
double spectral_top_value(const SensingSet& data);

}  // namespace bwrec
