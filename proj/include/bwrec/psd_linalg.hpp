#pragma once

#include <cstdint>
#include <functional>

#include "bwrec/types.hpp"

namespace bwrec {

// Cyclic Jacobi eigendecomposition for dense symmetric matrices (d <= 1024).
// Sweeps until the off-diagonal Frobenius norm is <= 1e-12 * ||A||_F.
// Eigenvalues are returned in nonincreasing order.
EigDecomp sym_eig(const SymMatrix& a);

// Principal square root of a PSD matrix. Eigenvalues in
// [-clip_tol * ||A||_2, 0) are clipped to zero; anything more negative
// raises NotPsd.
SymMatrix sqrt_psd(const SymMatrix& a, double clip_tol = kDefaultClipTol);

// Pseudo-inverse square root: A^{-1/2} on eigenvalues > rank_tol * lambda_1,
// zero on the rest. The zero matrix maps to the zero matrix.
SymMatrix pinv_sqrt_psd(const SymMatrix& a, double rank_tol = kDefaultRankTol);

// Cholesky C = L L^T with a relative pivot tolerance of 1e-12.
CholeskyFactor cholesky(const SymMatrix& c);

// Solves L z_i = x_i for every row x_i of `rows` (n x d); returns the z_i as
// rows. Forward substitution, O(n d^2) total.
Mat chol_solve_vectors(const CholeskyFactor& l, const Mat& rows);

struct RitzPairs {
  Mat basis;   // d x r, orthonormal columns
  Vec values;  // Ritz values, |values| nonincreasing, paired with columns
};

// Block operator: must apply a fixed symmetric matrix to each column.
using SymOperator = std::function<Mat(const Mat&)>;

// Subspace iteration with QR re-orthonormalization from a seeded Gaussian
// start. Deterministic given the seed; degenerate spectra resolve to an
// arbitrary orthonormal basis of the invariant subspace.
RitzPairs top_r_subspace(const SymOperator& apply_a, Index d, Index r,
                         int iters, std::uint64_t seed);

// Number of eigenvalues above rank_tol * max|eigenvalue| for a PSD spectrum.
Index numeric_rank(const Vec& eigenvalues, double rank_tol = kDefaultRankTol);

}  // namespace bwrec
