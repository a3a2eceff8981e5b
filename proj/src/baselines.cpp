#include "bwrec/baselines.hpp"

#include <chrono>
#include <cmath>

#include "bwrec/rng.hpp"

namespace bwrec {

namespace {

double now_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

}  // namespace

void EgdConfig::validate() const {
  if (rank < 1) throw InvalidInput("EgdConfig: rank must be >= 1");
  if (max_iters < 0) throw InvalidInput("EgdConfig: max_iters must be >= 0");
  if (record_every < 1) throw InvalidInput("EgdConfig: record_every >= 1");
  if (!linesearch && step != 0.0 && step < 0.0) {
    throw InvalidInput("EgdConfig: step must be positive");
  }
  if (init == InitKind::kExplicit && init_factor.size() == 0) {
    throw InvalidInput("EgdConfig: explicit init needs a factor");
  }
}

double egd_auto_step(const SensingSet& data, const Mat& u0) {
  const double top = spectral_top_value(data);
  Eigen::JacobiSVD<Mat> svd(u0);
  const double init_top = svd.singularValues().size() > 0
                              ? svd.singularValues()(0) * svd.singularValues()(0)
                              : 0.0;
  const double init_trace = u0.squaredNorm();
  return 0.1 / std::max({top, init_top + init_trace, 1e-12});
}

double egd_energy(const Mat& u, const SensingSet& data) {
  Vec quad = (data.vectors() * u).rowwise().squaredNorm();
  return (quad - data.values()).squaredNorm() /
         (2.0 * static_cast<double>(data.count()));
}

Mat egd_grad(const Mat& u, const SensingSet& data) {
  Mat p = data.vectors() * u;
  Vec resid = p.rowwise().squaredNorm() - data.values();
  return (2.0 / static_cast<double>(data.count())) *
         (data.vectors().transpose() * (resid.asDiagonal() * p));
}

Mat egd_step(const Mat& u, const SensingSet& data, double step) {
  return u - step * egd_grad(u, data);
}

SolveResult egd_solve(const SensingSet& data, const EgdConfig& config,
                      const Mat* truth_factor) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  res.factored = true;

  switch (config.init) {
    case InitKind::kRandom: {
      Rng rng(substream(config.seed, 0x1217));
      res.factor = config.init_scale *
                   rng.gaussian_matrix(data.dim(), std::min(config.rank, data.dim()));
      break;
    }
    case InitKind::kSpectral:
      res.factor = spectral_factor(data, std::min(config.rank, data.dim()));
      break;
    case InitKind::kExplicit:
      res.factor = config.init_factor;
      break;
  }

  double step = config.step;
  if (!config.linesearch && step <= 0.0) {
    step = egd_auto_step(data, res.factor);
  }

  double e = egd_energy(res.factor, data);
  Mat g = egd_grad(res.factor, data);
  double g2 = g.squaredNorm();
  auto record = [&](int k) {
    const double err = truth_factor == nullptr
                           ? std::nan("")
                           : factor_bw_dist(res.factor, *truth_factor);
    res.trace.rows.push_back(
        {k, e, std::sqrt(g2), g2, err, now_seconds(start)});
  };
  record(0);

  int k = 0;
  while (k < config.max_iters && g2 > config.tol) {
    if (config.linesearch) {
      double s = config.ls_init_step;
      bool accepted = false;
      for (int shrink = 0; shrink < 50; ++shrink) {
        Mat cand = res.factor - s * g;
        const double cand_e = egd_energy(cand, data);
        if (cand_e <= e - config.ls_armijo_c * s * g2) {
          res.factor = std::move(cand);
          e = cand_e;
          accepted = true;
          break;
        }
        s *= config.ls_shrink;
      }
      if (!accepted) {
        res.trace.step_failure = true;
        record(k);
        break;
      }
    } else {
      res.factor -= step * g;
      e = egd_energy(res.factor, data);
    }
    ++k;
    if (!std::isfinite(e)) {
      res.trace.diverged = true;
      record(k);
      break;
    }
    g = egd_grad(res.factor, data);
    g2 = g.squaredNorm();
    if (k % config.record_every == 0 || k == config.max_iters ||
        g2 <= config.tol) {
      record(k);
    }
  }
  res.iterations = k;
  return res;
}

SymMatrix spectral_estimator(const SensingSet& data, Index r) {
  RitzPairs ritz = spectral_ritz(data, r);
  Vec clipped = ritz.values.cwiseMax(0.0);
  return SymMatrix(ritz.basis * clipped.asDiagonal() * ritz.basis.transpose());
}

Mat spectral_factor(const SensingSet& data, Index r) {
  return spectral_init_factor(data, r);
}

double spectral_top_value(const SensingSet& data) {
  RitzPairs ritz = spectral_ritz(data, 1, 100);
  return std::abs(ritz.values(0));
}

}  // namespace bwrec
