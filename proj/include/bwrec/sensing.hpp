#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "bwrec/psd_linalg.hpp"
#include "bwrec/types.hpp"

namespace bwrec {

// Eigenvalue profile for the planted matrix. Alpha mode imposes
// (r^alpha, (r-1)^alpha, ..., 1) exactly on a random orthonormal range;
// range mode interpolates linearly from top to m_bottom.
struct SpectrumSpec {
  static SpectrumSpec Alpha(double alpha) {
    SpectrumSpec s;
    s.use_alpha = true;
    s.alpha = alpha;
    return s;
  }
  static SpectrumSpec Range(double bottom, double top) {
    SpectrumSpec s;
    s.use_alpha = false;
    s.bottom = bottom;
    s.top = top;
    return s;
  }

  bool use_alpha = true;
  double alpha = 0.0;
  double bottom = 1.0;
  double top = 1.0;
};

struct GroundTruth {
  SymMatrix s;       // planted PSD matrix of rank r
  Mat factor;        // d x r with factor factor^T = s
  Index rank = 0;
  SpectrumSpec spectrum;

  double sqrt_norm() const { return factor.norm(); }  // ||S^{1/2}||_F
};

// Measurement bundle {(x_i, y_i)}. Immutable after construction; whiten and
// perturb return new sets.
class SensingSet {
 public:
  SensingSet(Mat vectors, Vec values, bool whitened = false,
             std::optional<CholeskyFactor> whitening = std::nullopt);

  const Mat& vectors() const { return vectors_; }     // n x d, rows
  const Vec& values() const { return values_; }       // y, nonnegative
  const Vec& row_sqnorms() const { return row_sqnorms_; }
  bool whitened() const { return whitened_; }
  const std::optional<CholeskyFactor>& whitening() const { return whitening_; }
  Index dim() const { return vectors_.cols(); }
  Index count() const { return vectors_.rows(); }

 private:
  Mat vectors_;
  Vec values_;
  Vec row_sqnorms_;
  bool whitened_ = false;
  std::optional<CholeskyFactor> whitening_;
};

struct Perturbation {
  SymMatrix delta;  // PSD, rank r'
  Mat factor;       // d x r'
};

GroundTruth generate_ground_truth(Index d, Index r, const SpectrumSpec& spec,
                                  std::uint64_t seed);

// Standard Gaussian sensing vectors; y_i = ||factor^T x_i||^2, computed in
// O(n d r) without forming S.
SensingSet sense(const GroundTruth& gt, Index n, std::uint64_t seed);

// Cholesky-whitens the vectors: L from (1/n) sum x_i x_i^T, z_i solving
// L z_i = x_i. The y_i are unchanged. Rejects already-whitened input.
SensingSet whiten(const SensingSet& data);

// Inverts the whitening on an estimate: returns L^{-T} Sigma_hat L^{-1}, the
// matrix S with L^T S L = Sigma_hat. Triangular solves only.
SymMatrix unwhiten_estimate(const SymMatrix& estimate, const CholeskyFactor& l);

// Factor-space versions of the same coordinate changes.
Mat whiten_factor(const Mat& u, const CholeskyFactor& l);    // L^T u
Mat unwhiten_factor(const Mat& u, const CholeskyFactor& l);  // L^{-T} u

// Adds <x_i x_i^T, Delta> to every observation, Delta = factor factor^T.
// The data must not be whitened yet (perturb first, then whiten).
std::pair<SensingSet, Perturbation> perturb(const SensingSet& data,
                                            const Mat& delta_factor);

// Random rank-r' perturbation factor scaled so Tr(Delta) matches the trace
// estimate mean(y) of the planted matrix.
Mat default_perturbation_factor(const SensingSet& data, Index extra_rank,
                                std::uint64_t seed);

struct RipCheckResult {
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

// Empirical paired-difference check: for seeded random unit-Frobenius rank-r
// Delta, computes (1/n) sum_k |x_{2k-1}^T D x_{2k-1} - x_{2k}^T D x_{2k}| and
// reports the min/max over trials. Diagnostic only.
RipCheckResult rip_check(const SensingSet& data, int trials, Index r,
                         std::uint64_t seed);

// CSV schema: header line "d,n,whitened", then n lines "x_1,...,x_d,y".
void save_sensing_csv(const SensingSet& data, const std::string& path);
SensingSet load_sensing_csv(const std::string& path);

}  // namespace bwrec
