#pragma once

#include "bwrec/psd_linalg.hpp"
#include "bwrec/types.hpp"

namespace bwrec {

// Squared Bures-Wasserstein distance
//   Tr[S0 + S1 - 2 (S0^{1/2} S1 S0^{1/2})^{1/2}],
// clamped at zero to absorb roundoff.
double bw_dist2(const SymMatrix& s0, const SymMatrix& s1,
                double clip_tol = kDefaultClipTol);

// Closed form against a rank-one target:
//   d^2(S, w w^T) = Tr(S) + ||w||^2 - 2 sqrt(w^T S w).
// O(d^2), no eigendecomposition.
double bw_dist2_rank1(const SymMatrix& s, const Vec& w);

struct TransportMap {
  SymMatrix matrix;  // T with T S0 T = S1
  Index source_rank = 0;
  Index target_rank = 0;
};

// Optimal transport map T = S1^{1/2} (S1^{1/2} S0 S1^{1/2})^{-1/2} S1^{1/2}
// (pseudo-inverse). Requires rank(S1^{1/2} S0 S1^{1/2}) = rank(S1), i.e. S0
// must not annihilate any direction of S1's range; raises RankMismatch
// otherwise. Higher-rank sources can be transported to lower-rank targets.
TransportMap transport_map(const SymMatrix& s0, const SymMatrix& s1,
                           double rank_tol = kDefaultRankTol);

enum class GeodesicKind { kEuclidean, kBuresWasserstein };

// Euclidean: (1-t) S0 + t S1.
// Bures-Wasserstein: (I + t(T - I)) S0 (I + t(T - I)).
SymMatrix geodesic(const SymMatrix& s0, const SymMatrix& s1, double t,
                   GeodesicKind kind);

// Factored geodesic (1-t) U0 + t U1; callers must align U1 to U0 first
// (procrustes_align below).
Mat geodesic_factored(const Mat& u0, const Mat& u1, double t);

// Squared norm of V in the BW Riemannian metric at S: Tr(V S V^T), the closed
// form of E_{z ~ N(0, S)} ||V z||^2.
double riem_norm2(const Mat& v, const SymMatrix& sigma);

// Resolves the rotational symmetry U U^T = (U R)(U R)^T: returns u1 * R with
// R orthogonal minimizing ||u1 R - u0||_F.
Mat procrustes_align(const Mat& u0, const Mat& u1);

// d_BW between factored matrices: min_R ||u0 - u1 R||_F, evaluated through
// the singular values of u1^T u0. Cheap per-iteration error proxy.
double factor_bw_dist(const Mat& u0, const Mat& u1);

// ||A^{1/2} - B^{1/2}||_F via full eigendecompositions.
double sqrt_diff_norm(const SymMatrix& a, const SymMatrix& b);

// Same metric for factored inputs, using only r x r eigenproblems.
double sqrt_diff_norm_factored(const Mat& u_a, const Mat& u_b);

}  // namespace bwrec
