#include "bwrec/sensing.hpp"

#include <cmath>
#include <fstream>

#include "bwrec/csv.hpp"
#include "bwrec/rng.hpp"

namespace bwrec {

SensingSet::SensingSet(Mat vectors, Vec values, bool whitened,
                       std::optional<CholeskyFactor> whitening)
    : vectors_(std::move(vectors)),
      values_(std::move(values)),
      whitened_(whitened),
      whitening_(std::move(whitening)) {
  if (vectors_.rows() != values_.size()) {
    throw InvalidInput("SensingSet: one value per sensing vector required");
  }
  if (vectors_.rows() < 1) {
    throw InvalidInput("SensingSet: at least one measurement required");
  }
  if (values_.size() > 0 && values_.minCoeff() < 0.0) {
    throw InvalidInput("SensingSet: negative observation");
  }
  row_sqnorms_ = vectors_.rowwise().squaredNorm();
}

GroundTruth generate_ground_truth(Index d, Index r, const SpectrumSpec& spec,
                                  std::uint64_t seed) {
  if (d < 1 || r < 1 || r > d) {
    throw InvalidInput("generate_ground_truth: need 1 <= r <= d");
  }
  Rng rng(seed);
  Eigen::HouseholderQR<Mat> qr(rng.gaussian_matrix(d, r));
  Mat range = qr.householderQ() * Mat::Identity(d, r);

  Vec profile(r);
  for (Index j = 0; j < r; ++j) {
    if (spec.use_alpha) {
      profile(j) = std::pow(static_cast<double>(r - j), spec.alpha);
    } else if (r == 1) {
      profile(j) = spec.top;
    } else {
      const double frac = static_cast<double>(j) / static_cast<double>(r - 1);
      profile(j) = spec.top + frac * (spec.bottom - spec.top);
    }
  }

  GroundTruth gt;
  gt.rank = r;
  gt.spectrum = spec;
  gt.factor = range * profile.cwiseSqrt().asDiagonal();
  gt.s = SymMatrix(gt.factor * gt.factor.transpose());
  return gt;
}

SensingSet sense(const GroundTruth& gt, Index n, std::uint64_t seed) {
  if (n < 1) {
    throw InvalidInput("sense: need n >= 1");
  }
  Rng rng(seed);
  Mat x = rng.gaussian_matrix(n, gt.factor.rows());
  Vec y = (x * gt.factor).rowwise().squaredNorm();
  return SensingSet(std::move(x), std::move(y));
}

SensingSet whiten(const SensingSet& data) {
  if (data.whitened()) {
    throw InvalidInput("whiten: data is already whitened");
  }
  const Index n = data.count();
  SymMatrix second_moment(data.vectors().transpose() * data.vectors() /
                          static_cast<double>(n));
  CholeskyFactor l;
  try {
    l = cholesky(second_moment);
  } catch (const NotPd&) {
    throw NotPd(
        "whiten: sample second moment is singular; need n >= d "
        "well-conditioned sensing vectors");
  }
  Mat z = chol_solve_vectors(l, data.vectors());
  return SensingSet(std::move(z), data.values(), true, std::move(l));
}

SymMatrix unwhiten_estimate(const SymMatrix& estimate,
                            const CholeskyFactor& l) {
  if (estimate.dim() != l.dim()) {
    throw InvalidInput("unwhiten_estimate: dimension mismatch");
  }
  Mat w = l.solve_upper(estimate.mat());            // L^{-T} Sigma
  Mat y = l.solve_upper(w.transpose()).transpose(); // ... L^{-1}
  return SymMatrix(y);
}

Mat whiten_factor(const Mat& u, const CholeskyFactor& l) {
  return l.lower().transpose() * u;
}

Mat unwhiten_factor(const Mat& u, const CholeskyFactor& l) {
  return l.solve_upper(u);
}

std::pair<SensingSet, Perturbation> perturb(const SensingSet& data,
                                            const Mat& delta_factor) {
  if (data.whitened()) {
    throw InvalidInput("perturb: perturb before whitening");
  }
  if (delta_factor.rows() != data.dim()) {
    throw InvalidInput("perturb: factor dimension mismatch");
  }
  Vec extra = (data.vectors() * delta_factor).rowwise().squaredNorm();
  Perturbation p;
  p.factor = delta_factor;
  p.delta = SymMatrix(delta_factor * delta_factor.transpose());
  return {SensingSet(data.vectors(), data.values() + extra), std::move(p)};
}

Mat default_perturbation_factor(const SensingSet& data, Index extra_rank,
                                std::uint64_t seed) {
  if (extra_rank < 1) {
    throw InvalidInput("default_perturbation_factor: need extra_rank >= 1");
  }
  Rng rng(seed);
  Eigen::HouseholderQR<Mat> qr(rng.gaussian_matrix(data.dim(), extra_rank));
  Mat q = qr.householderQ() * Mat::Identity(data.dim(), extra_rank);
  const double trace_estimate = data.values().mean();
  const double col_scale =
      std::sqrt(std::max(trace_estimate, 1e-12) / static_cast<double>(extra_rank));
  return q * col_scale;
}

RipCheckResult rip_check(const SensingSet& data, int trials, Index r,
                         std::uint64_t seed) {
  if (data.count() % 2 != 0) {
    throw InvalidInput("rip_check: need an even number of measurements");
  }
  if (trials < 1 || r < 1 || r > data.dim()) {
    throw InvalidInput("rip_check: need trials >= 1 and 1 <= r <= d");
  }
  const Index n = data.count();
  RipCheckResult out;
  for (int t = 0; t < trials; ++t) {
    Rng rng(substream(seed, static_cast<std::uint64_t>(t)));
    Mat b = rng.gaussian_matrix(data.dim(), r);
    Vec signs(r);
    for (Index j = 0; j < r; ++j) {
      signs(j) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
    // ||B diag(s) B^T||_F^2 = Tr(D G D G), G = B^T B.
    Mat g = b.transpose() * b;
    Mat dg = signs.asDiagonal() * g;
    const double fro = std::sqrt((dg * dg).trace());
    b /= std::sqrt(fro);

    Mat proj = data.vectors() * b;                 // n x r
    Vec quad = (proj.array().square().matrix() * signs);  // x_i^T D x_i
    double sum = 0.0;
    for (Index k = 0; k + 1 < n; k += 2) {
      sum += std::abs(quad(k) - quad(k + 1));
    }
    const double ratio = sum / static_cast<double>(n);
    if (t == 0) {
      out.min_ratio = out.max_ratio = ratio;
    } else {
      out.min_ratio = std::min(out.min_ratio, ratio);
      out.max_ratio = std::max(out.max_ratio, ratio);
    }
  }
  return out;
}

void save_sensing_csv(const SensingSet& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  f << data.dim() << ',' << data.count() << ','
    << (data.whitened() ? "true" : "false") << '\n';
  for (Index i = 0; i < data.count(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) {
      f << format_double(data.vectors()(i, j)) << ',';
    }
    f << format_double(data.values()(i)) << '\n';
  }
}

SensingSet load_sensing_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open for reading: " + path);
  }
  std::string line;
  if (!std::getline(f, line)) {
    throw InvalidInput("sensing csv: missing header in " + path);
  }
  auto header = split_csv_line(line);
  if (header.size() != 3) {
    throw InvalidInput("sensing csv: header must be d,n,whitened");
  }
  const Index d = static_cast<Index>(std::stol(header[0]));
  const Index n = static_cast<Index>(std::stol(header[1]));
  const bool whitened = header[2] == "true";

  Mat x(n, d);
  Vec y(n);
  Index row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (row >= n) {
      throw InvalidInput("sensing csv: more rows than the header declares");
    }
    auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != d + 1) {
      throw InvalidInput("sensing csv: row width mismatch");
    }
    for (Index j = 0; j < d; ++j) {
      x(row, j) = parse_double(fields[static_cast<size_t>(j)]);
    }
    y(row) = parse_double(fields[static_cast<size_t>(d)]);
    ++row;
  }
  if (row != n) {
    throw InvalidInput("sensing csv: fewer rows than the header declares");
  }
  return SensingSet(std::move(x), std::move(y), whitened);
}

}  // namespace bwrec
