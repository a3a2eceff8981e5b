#include "bwrec/psd_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bwrec/rng.hpp"

namespace bwrec {

namespace {

double offdiag_norm(const Mat& a) {
  const Index d = a.rows();
  double s = 0.0;
  for (Index p = 0; p < d; ++p) {
    for (Index q = p + 1; q < d; ++q) {
      s += a(p, q) * a(p, q);
    }
  }
  return std::sqrt(2.0 * s);
}

}  // namespace

EigDecomp sym_eig(const SymMatrix& input) {
  const Mat& a0 = input.mat();
  if (!a0.allFinite()) {
    throw InvalidInput("sym_eig: non-finite entries");
  }
  const Index d = a0.rows();
  EigDecomp out;
  if (d == 0) {
    out.values = Vec(0);
    out.vectors = Mat(0, 0);
    return out;
  }

  Mat a = a0;
  Mat v = Mat::Identity(d, d);
  const double fro = a.norm();
  const double tol = 1e-12 * (fro > 0.0 ? fro : 1.0);
  const int max_sweeps = 64;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (offdiag_norm(a) <= tol) break;
    for (Index p = 0; p < d - 1; ++p) {
      for (Index q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        double t;
        if (tau >= 0.0) {
          t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
        } else {
          t = 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < d; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(p, k) = a(k, p);
          a(k, q) = s * akp + c * akq;
          a(q, k) = a(k, q);
        }
        for (Index k = 0; k < d; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  out.values = Vec(d);
  out.vectors = Mat(d, d);
  for (Index k = 0; k < d; ++k) {
    out.values(k) = a(order[static_cast<size_t>(k)], order[static_cast<size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<size_t>(k)]);
  }
  return out;
}

namespace {

// Applies f to the eigenvalues and reassembles V f(Lambda) V^T.
SymMatrix eig_map(const EigDecomp& e, const std::function<double(double)>& f) {
  Vec mapped(e.values.size());
  for (Index i = 0; i < e.values.size(); ++i) {
    mapped(i) = f(e.values(i));
  }
  Mat m = e.vectors * mapped.asDiagonal() * e.vectors.transpose();
  return SymMatrix(m);
}

}  // namespace

SymMatrix sqrt_psd(const SymMatrix& a, double clip_tol) {
  EigDecomp e = sym_eig(a);
  if (e.values.size() == 0) return a;
  const double top = e.values.cwiseAbs().maxCoeff();
  const double floor = -clip_tol * top;
  if (e.values.minCoeff() < floor) {
    throw NotPsd("sqrt_psd: eigenvalue below -clip_tol * ||A||_2");
  }
  // Eigenvalues inside the clip band are numerical noise either way; taking
  // their square root would inject O(sqrt(eps)) spurious mass into the null
  // directions of rank-deficient input.
  const double cut = clip_tol * top;
  return eig_map(e, [cut](double x) { return x > cut ? std::sqrt(x) : 0.0; });
}

SymMatrix pinv_sqrt_psd(const SymMatrix& a, double rank_tol) {
  EigDecomp e = sym_eig(a);
  if (e.values.size() == 0) return a;
  const double top = e.values.cwiseAbs().maxCoeff();
  const double floor = -kDefaultClipTol * top;
  if (e.values.minCoeff() < floor) {
    throw NotPsd("pinv_sqrt_psd: eigenvalue below -clip_tol * ||A||_2");
  }
  const double lambda1 = std::max(e.values.maxCoeff(), 0.0);
  const double cut = rank_tol * lambda1;
  return eig_map(e, [cut](double x) {
    return x > cut && x > 0.0 ? 1.0 / std::sqrt(x) : 0.0;
  });
}

CholeskyFactor cholesky(const SymMatrix& c) {
  const Mat& a = c.mat();
  const Index d = a.rows();
  const double scale = d > 0 ? a.diagonal().maxCoeff() : 0.0;
  if (!(scale > 0.0)) {
    throw NotPd("cholesky: matrix has no positive diagonal entry");
  }
  const double piv_tol = 1e-12 * scale;
  Mat l = Mat::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    double s = a(j, j);
    if (j > 0) s -= l.row(j).head(j).squaredNorm();
    if (s <= piv_tol) {
      throw NotPd("cholesky: pivot below tolerance, matrix is not PD");
    }
    l(j, j) = std::sqrt(s);
    for (Index i = j + 1; i < d; ++i) {
      double x = a(i, j);
      if (j > 0) x -= l.row(i).head(j).dot(l.row(j).head(j));
      l(i, j) = x / l(j, j);
    }
  }
  return CholeskyFactor(std::move(l));
}

Mat chol_solve_vectors(const CholeskyFactor& l, const Mat& rows) {
  if (rows.cols() != l.dim()) {
    throw InvalidInput("chol_solve_vectors: dimension mismatch");
  }
  return l.solve_lower(rows.transpose()).transpose();
}

namespace {

Mat thin_q(const Mat& z) {
  Eigen::HouseholderQR<Mat> qr(z);
  return qr.householderQ() * Mat::Identity(z.rows(), z.cols());
}

}  // namespace

RitzPairs top_r_subspace(const SymOperator& apply_a, Index d, Index r,
                         int iters, std::uint64_t seed) {
  if (iters < 1 || r < 1 || r > d) {
    throw InvalidInput("top_r_subspace: need 1 <= r <= d and iters >= 1");
  }
  Rng rng(seed);
  Mat q = thin_q(rng.gaussian_matrix(d, r));
  for (int it = 0; it < iters; ++it) {
    q = thin_q(apply_a(q));
  }
  Mat aq = apply_a(q);
  SymMatrix small(q.transpose() * aq);
  EigDecomp e = sym_eig(small);

  std::vector<Index> order(static_cast<size_t>(r));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
    return std::abs(e.values(i)) > std::abs(e.values(j));
  });

  RitzPairs out;
  out.values = Vec(r);
  Mat w(r, r);
  for (Index k = 0; k < r; ++k) {
    out.values(k) = e.values(order[static_cast<size_t>(k)]);
    w.col(k) = e.vectors.col(order[static_cast<size_t>(k)]);
  }
  out.basis = q * w;
  return out;
}

Index numeric_rank(const Vec& eigenvalues, double rank_tol) {
  if (eigenvalues.size() == 0) return 0;
  const double top = eigenvalues.cwiseAbs().maxCoeff();
  if (top == 0.0) return 0;
  const double cut = rank_tol * top;
  Index rank = 0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues(i) > cut) ++rank;
  }
  return rank;
}

}  // namespace bwrec
