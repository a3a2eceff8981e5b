#include "bwrec/bw_geometry.hpp"

#include <algorithm>
#include <cmath>

namespace bwrec {

double bw_dist2(const SymMatrix& s0, const SymMatrix& s1, double clip_tol) {
  if (s0.dim() != s1.dim()) {
    throw InvalidInput("bw_dist2: dimension mismatch");
  }
  // Tr[(S0^{1/2} S1 S0^{1/2})^{1/2}] equals the nuclear norm of
  // S0^{1/2} S1^{1/2}; the SVD route keeps the small singular values of
  // rank-deficient inputs at full precision, which the eigenvalue route of
  // the squared product does not.
  SymMatrix r0 = sqrt_psd(s0, clip_tol);
  SymMatrix r1 = sqrt_psd(s1, clip_tol);
  Eigen::JacobiSVD<Mat> svd(r0.mat() * r1.mat());
  const double cross = svd.singularValues().sum();
  const double d2 = s0.trace() + s1.trace() - 2.0 * cross;
  return std::max(d2, 0.0);
}

double bw_dist2_rank1(const SymMatrix& s, const Vec& w) {
  if (s.dim() != w.size()) {
    throw InvalidInput("bw_dist2_rank1: dimension mismatch");
  }
  const double quad = std::max(w.dot(s.mat() * w), 0.0);
  const double d2 = s.trace() + w.squaredNorm() - 2.0 * std::sqrt(quad);
  return std::max(d2, 0.0);
}

TransportMap transport_map(const SymMatrix& s0, const SymMatrix& s1,
                           double rank_tol) {
  if (s0.dim() != s1.dim()) {
    throw InvalidInput("transport_map: dimension mismatch");
  }
  EigDecomp e0 = sym_eig(s0);
  EigDecomp e1 = sym_eig(s1);
  const Index rank0 = numeric_rank(e0.values, rank_tol);
  const Index rank1 = numeric_rank(e1.values, rank_tol);

  SymMatrix root1 = sqrt_psd(s1);
  SymMatrix inner(root1.mat() * s0.mat() * root1.mat());
  EigDecomp ei = sym_eig(inner);
  if (numeric_rank(ei.values, rank_tol) != rank1) {
    throw RankMismatch(
        "transport_map: no map with T S0 T = S1 exists (source rank "
        "deficient on the target range)");
  }
  SymMatrix inv_root = pinv_sqrt_psd(inner, rank_tol);
  TransportMap out;
  out.matrix = SymMatrix(root1.mat() * inv_root.mat() * root1.mat());
  out.source_rank = rank0;
  out.target_rank = rank1;
  return out;
}

SymMatrix geodesic(const SymMatrix& s0, const SymMatrix& s1, double t,
                   GeodesicKind kind) {
  if (s0.dim() != s1.dim()) {
    throw InvalidInput("geodesic: dimension mismatch");
  }
  if (kind == GeodesicKind::kEuclidean) {
    return SymMatrix((1.0 - t) * s0.mat() + t * s1.mat());
  }
  TransportMap tm = transport_map(s0, s1);
  const Index d = s0.dim();
  Mat m = Mat::Identity(d, d) + t * (tm.matrix.mat() - Mat::Identity(d, d));
  return SymMatrix(m * s0.mat() * m);
}

Mat geodesic_factored(const Mat& u0, const Mat& u1, double t) {
  if (u0.rows() != u1.rows() || u0.cols() != u1.cols()) {
    throw InvalidInput("geodesic_factored: factor shape mismatch");
  }
  return (1.0 - t) * u0 + t * u1;
}

double riem_norm2(const Mat& v, const SymMatrix& sigma) {
  if (v.cols() != sigma.dim()) {
    throw InvalidInput("riem_norm2: dimension mismatch");
  }
  const double n2 = (v * sigma.mat() * v.transpose()).trace();
  return std::max(n2, 0.0);
}

Mat procrustes_align(const Mat& u0, const Mat& u1) {
  if (u0.rows() != u1.rows()) {
    throw InvalidInput("procrustes_align: row mismatch");
  }
  Mat m = u1.transpose() * u0;
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat r = svd.matrixU() * svd.matrixV().transpose();
  return u1 * r;
}

double factor_bw_dist(const Mat& u0, const Mat& u1) {
  if (u0.rows() != u1.rows()) {
    throw InvalidInput("factor_bw_dist: row mismatch");
  }
  if (!u0.allFinite() || !u1.allFinite()) return std::nan("");
  Mat cross = u1.transpose() * u0;
  const double tr0 = u0.squaredNorm();
  const double tr1 = u1.squaredNorm();
  if (!cross.allFinite() || !std::isfinite(tr0) || !std::isfinite(tr1)) {
    return std::nan("");
  }
  Eigen::JacobiSVD<Mat> svd(cross);
  const double d2 = tr0 + tr1 - 2.0 * svd.singularValues().sum();
  return std::sqrt(std::max(d2, 0.0));
}

double sqrt_diff_norm(const SymMatrix& a, const SymMatrix& b) {
  return (sqrt_psd(a).mat() - sqrt_psd(b).mat()).norm();
}

double sqrt_diff_norm_factored(const Mat& u_a, const Mat& u_b) {
  if (u_a.rows() != u_b.rows()) {
    throw InvalidInput("sqrt_diff_norm_factored: row mismatch");
  }
  if (!u_a.allFinite() || !u_b.allFinite()) return std::nan("");
  // With A = U_a U_a^T, A^{1/2} = U_a (U_a^T U_a)^{-1/2} U_a^T (pseudo-inverse
  // on the Gram spectrum), so the cross trace reduces to r x r algebra:
  //   Tr[A^{1/2} B^{1/2}] = Tr[Ma C Mb C^T],  C = U_a^T U_b.
  SymMatrix ga(u_a.transpose() * u_a);
  SymMatrix gb(u_b.transpose() * u_b);
  if (!ga.mat().allFinite() || !gb.mat().allFinite()) return std::nan("");
  Mat ma = pinv_sqrt_psd(ga).mat();
  Mat mb = pinv_sqrt_psd(gb).mat();
  Mat c = u_a.transpose() * u_b;
  const double cross = (ma * c * mb * c.transpose()).trace();
  const double tr_a = u_a.squaredNorm();
  const double tr_b = u_b.squaredNorm();
  const double d2 = tr_a + tr_b - 2.0 * cross;
  return std::sqrt(std::max(d2, 0.0));
}

}  // namespace bwrec
