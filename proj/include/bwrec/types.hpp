#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace bwrec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotPsd : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPd : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultClipTol = 1e-10;
inline constexpr double kDefaultRankTol = 1e-10;

// Dense symmetric matrix. Construction symmetrizes via (A + A^T)/2, so the
// stored entries satisfy A(i,j) == A(j,i) exactly.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Mat& a) {
    if (a.rows() != a.cols()) {
      throw InvalidInput("SymMatrix: matrix must be square");
    }
    m_ = 0.5 * (a + a.transpose());
  }

  static SymMatrix Zero(Index d) { return SymMatrix(Mat::Zero(d, d)); }
  static SymMatrix Identity(Index d) { return SymMatrix(Mat::Identity(d, d)); }
  static SymMatrix FromDiagonal(const Vec& diag) {
    return SymMatrix(Mat(diag.asDiagonal()));
  }

  Index dim() const { return m_.rows(); }
  const Mat& mat() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }
  double norm() const { return m_.norm(); }

 private:
  Mat m_;
};

// Eigendecomposition A = V diag(values) V^T with values nonincreasing and
// column k of V paired with values[k].
struct EigDecomp {
  Vec values;
  Mat vectors;

  Mat reconstruct() const {
    return vectors * values.asDiagonal() * vectors.transpose();
  }
};

// Lower-triangular factor L with positive diagonal, C = L L^T.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  explicit CholeskyFactor(Mat lower) : l_(std::move(lower)) {
    if (l_.rows() != l_.cols()) {
      throw InvalidInput("CholeskyFactor: matrix must be square");
    }
    for (Index j = 0; j < l_.cols(); ++j) {
      if (!(l_(j, j) > 0.0)) {
        throw InvalidInput("CholeskyFactor: diagonal must be positive");
      }
    }
  }

  Index dim() const { return l_.rows(); }
  const Mat& lower() const { return l_; }

  // Solves L X = B.
  Mat solve_lower(const Mat& b) const {
    return l_.triangularView<Eigen::Lower>().solve(b);
  }

  // Solves L^T X = B.
  Mat solve_upper(const Mat& b) const {
    return l_.transpose().triangularView<Eigen::Upper>().solve(b);
  }

  Mat reconstruct() const { return l_ * l_.transpose(); }

 private:
  Mat l_;
};

}  // namespace bwrec
