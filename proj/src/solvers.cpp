#include "bwrec/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "bwrec/csv.hpp"
#include "bwrec/rng.hpp"

namespace bwrec {

namespace {

constexpr Index kReductionBlock = 8192;

double now_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// Per-sample weights sqrt(y_i)/sqrt(q_i) with the safeguard skip; q_i is the
// quadratic form z_i^T Sigma z_i.
Vec map_weights(const Vec& y, const Vec& quad, const Vec& z_sqnorms,
                double trace_sigma, double eps) {
  Vec w(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    const double q = quad(i);
    if (q <= eps * z_sqnorms(i) * trace_sigma || q <= 0.0) {
      w(i) = 0.0;
    } else {
      w(i) = std::sqrt(y(i)) / std::sqrt(q);
    }
  }
  return w;
}

// sum over samples of the weighted projection block Z^T (w . P), evaluated
// either in one pass or as a fixed pairwise tree over row blocks.
Mat weighted_cross(const Mat& z, const Mat& p, const Vec& w,
                   ReductionMode mode) {
  if (mode == ReductionMode::kSequential || z.rows() <= kReductionBlock) {
    return z.transpose() * (w.asDiagonal() * p);
  }
  const Index n = z.rows();
  const Index blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<std::future<Mat>> parts;
  parts.reserve(static_cast<size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) {
    const Index lo = b * kReductionBlock;
    const Index len = std::min(kReductionBlock, n - lo);
    parts.push_back(std::async(std::launch::async, [&, lo, len] {
      return Mat(z.middleRows(lo, len).transpose() *
                 (w.segment(lo, len).asDiagonal() * p.middleRows(lo, len)));
    }));
  }
  std::vector<Mat> partial;
  partial.reserve(parts.size());
  for (auto& f : parts) partial.push_back(f.get());
  // Fixed-shape pairwise combine keeps the result independent of timing.
  while (partial.size() > 1) {
    std::vector<Mat> next;
    next.reserve((partial.size() + 1) / 2);
    for (size_t i = 0; i + 1 < partial.size(); i += 2) {
      next.push_back(partial[i] + partial[i + 1]);
    }
    if (partial.size() % 2 == 1) next.push_back(partial.back());
    partial = std::move(next);
  }
  return partial.front();
}

double energy_from_quads(const Vec& y, const Vec& quad, const Vec& z_sqnorms,
                         double trace_sigma) {
  const double n = static_cast<double>(y.size());
  double cross = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double prod = y(i) * std::max(quad(i), 0.0);
    cross += std::sqrt(prod);
  }
  const double offset = y.dot(z_sqnorms);
  return 0.5 * trace_sigma + offset / (2.0 * n) - cross / n;
}

struct FactoredEval {
  Mat projections;  // Z U, n x r
  Vec weights;      // safeguarded sqrt(y)/sqrt(q)
  Mat map_applied;  // fixed_point_map(U U^T) U
  double energy = 0.0;
  double riem2 = 0.0;  // ||(I - map) U||_F^2 = Tr(grad Sigma grad)
};

FactoredEval eval_factored(const Mat& u, const SensingSet& data, double eps,
                           ReductionMode mode) {
  FactoredEval ev;
  const double n = static_cast<double>(data.count());
  const double tr = u.squaredNorm();
  ev.projections.noalias() = data.vectors() * u;
  Vec quad = ev.projections.rowwise().squaredNorm();
  ev.weights = map_weights(data.values(), quad, data.row_sqnorms(), tr, eps);
  ev.map_applied =
      weighted_cross(data.vectors(), ev.projections, ev.weights, mode) / n;
  ev.energy = energy_from_quads(data.values(), quad, data.row_sqnorms(), tr);
  ev.riem2 = (u - ev.map_applied).squaredNorm();
  return ev;
}

struct FullEval {
  Vec weights;
  SymMatrix map;  // fixed_point_map(Sigma)
  double energy = 0.0;
  double riem2 = 0.0;
};

FullEval eval_full(const SymMatrix& sigma, const SensingSet& data, double eps,
                   ReductionMode mode) {
  FullEval ev;
  const double n = static_cast<double>(data.count());
  Mat zs = data.vectors() * sigma.mat();
  Vec quad = (zs.array() * data.vectors().array()).rowwise().sum();
  ev.weights =
      map_weights(data.values(), quad, data.row_sqnorms(), sigma.trace(), eps);
  ev.map = SymMatrix(
      weighted_cross(data.vectors(), data.vectors(), ev.weights, mode) / n);
  ev.energy =
      energy_from_quads(data.values(), quad, data.row_sqnorms(), sigma.trace());
  Mat grad = -ev.map.mat();
  grad.diagonal().array() += 1.0;
  ev.riem2 = std::max((grad * sigma.mat() * grad).trace(), 0.0);
  return ev;
}

double smallest_singular_ratio(const Mat& u) {
  Eigen::JacobiSVD<Mat> svd(u);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

}  // namespace

void SolverConfig::validate() const {
  if (rank < 1) {
    throw InvalidInput("SolverConfig: rank must be >= 1");
  }
  if (schedule == StepSchedule::kConstant && !(eta > 0.0 && eta <= 1.0)) {
    throw InvalidInput("SolverConfig: constant step must satisfy 0 < eta <= 1");
  }
  if (max_iters < 0) {
    throw InvalidInput("SolverConfig: max_iters must be >= 0");
  }
  if (record_every < 1) {
    throw InvalidInput("SolverConfig: record_every must be >= 1");
  }
  if (epochs < 1) {
    throw InvalidInput("SolverConfig: epochs must be >= 1");
  }
  if (init == InitKind::kExplicit && init_factor.size() == 0) {
    throw InvalidInput("SolverConfig: explicit init needs a factor");
  }
}

void Trace::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  f << "iter,energy,grad_fro,grad_riem2,err_bw_sqrt,seconds\n";
  for (const TraceRow& r : rows) {
    f << r.iter << ',' << format_double(r.energy) << ','
      << format_double(r.grad_fro) << ',' << format_double(r.grad_riem2) << ','
      << format_double(r.err_bw_sqrt) << ',' << format_double(r.seconds)
      << '\n';
  }
}

double energy(const SymMatrix& sigma, const SensingSet& data) {
  if (sigma.dim() != data.dim()) {
    throw InvalidInput("energy: dimension mismatch");
  }
  Mat zs = data.vectors() * sigma.mat();
  Vec quad = (zs.array() * data.vectors().array()).rowwise().sum();
  return energy_from_quads(data.values(), quad, data.row_sqnorms(),
                           sigma.trace());
}

double energy_factored(const Mat& u, const SensingSet& data) {
  if (u.rows() != data.dim()) {
    throw InvalidInput("energy_factored: dimension mismatch");
  }
  Vec quad = (data.vectors() * u).rowwise().squaredNorm();
  return energy_from_quads(data.values(), quad, data.row_sqnorms(),
                           u.squaredNorm());
}

double energy_sqrt_residual(const SymMatrix& sigma, const SensingSet& data) {
  if (sigma.dim() != data.dim()) {
    throw InvalidInput("energy_sqrt_residual: dimension mismatch");
  }
  Mat zs = data.vectors() * sigma.mat();
  Vec quad = (zs.array() * data.vectors().array()).rowwise().sum();
  double s = 0.0;
  for (Index i = 0; i < quad.size(); ++i) {
    const double diff =
        std::sqrt(std::max(quad(i), 0.0)) - std::sqrt(data.values()(i));
    s += diff * diff;
  }
  return s / (2.0 * static_cast<double>(data.count()));
}

SymMatrix fixed_point_map(const SymMatrix& sigma, const SensingSet& data,
                          double safeguard_eps, ReductionMode mode) {
  if (sigma.dim() != data.dim()) {
    throw InvalidInput("fixed_point_map: dimension mismatch");
  }
  return eval_full(sigma, data, safeguard_eps, mode).map;
}

Mat fixed_point_map_apply(const Mat& u, const SensingSet& data,
                          double safeguard_eps, ReductionMode mode) {
  if (u.rows() != data.dim()) {
    throw InvalidInput("fixed_point_map_apply: dimension mismatch");
  }
  return eval_factored(u, data, safeguard_eps, mode).map_applied;
}

SymMatrix energy_grad(const SymMatrix& sigma, const SensingSet& data,
                      double safeguard_eps) {
  Mat g = -fixed_point_map(sigma, data, safeguard_eps).mat();
  g.diagonal().array() += 1.0;
  return SymMatrix(g);
}

SymMatrix bwgd_step_full(const SymMatrix& sigma, const SensingSet& data,
                         double eta, double safeguard_eps) {
  SymMatrix map = fixed_point_map(sigma, data, safeguard_eps);
  Mat m = (1.0 - eta) * Mat::Identity(sigma.dim(), sigma.dim()) +
          eta * map.mat();
  return SymMatrix(m * sigma.mat() * m);
}

Mat bwgd_step_factored(const Mat& u, const SensingSet& data, double eta,
                       double safeguard_eps) {
  Mat applied = fixed_point_map_apply(u, data, safeguard_eps);
  return (1.0 - eta) * u + eta * applied;
}

Mat bwsgd_step(const Mat& u, const Vec& z, double y, double eta,
               double safeguard_eps) {
  if (u.rows() != z.size()) {
    throw InvalidInput("bwsgd_step: dimension mismatch");
  }
  Vec proj = u.transpose() * z;  // r
  const double q = proj.squaredNorm();
  Mat next = (1.0 - eta) * u;
  if (q > safeguard_eps * z.squaredNorm() * u.squaredNorm() && q > 0.0 &&
      y > 0.0) {
    next.noalias() += (eta * std::sqrt(y) / std::sqrt(q)) * z * proj.transpose();
  }
  return next;
}

RitzPairs spectral_ritz(const SensingSet& data, Index r, int iters,
                        std::uint64_t seed) {
  const double n = static_cast<double>(data.count());
  const double y_sum = data.values().sum();
  const Mat& z = data.vectors();
  const Vec& y = data.values();
  SymOperator apply = [&z, &y, y_sum, n](const Mat& v) {
    Mat p = z * v;
    Mat out = z.transpose() * (y.asDiagonal() * p) / (2.0 * n);
    out.noalias() -= (y_sum / (2.0 * n)) * v;
    return out;
  };
  return top_r_subspace(apply, data.dim(), r, iters, seed);
}

Mat spectral_init_factor(const SensingSet& data, Index r) {
  RitzPairs ritz = spectral_ritz(data, r);
  Vec scale(r);
  for (Index j = 0; j < r; ++j) {
    scale(j) = ritz.values(j) > 0.0 ? std::sqrt(ritz.values(j)) : 0.0;
  }
  return ritz.basis * scale.asDiagonal();
}

namespace {

Mat initial_factor(const SensingSet& data, const SolverConfig& cfg) {
  const Index d = data.dim();
  const Index cols =
      cfg.algorithm == Algorithm::kBwGdFull ? d : std::min(cfg.rank, d);
  switch (cfg.init) {
    case InitKind::kRandom: {
      Rng rng(substream(cfg.seed, 0x1217));
      return cfg.init_scale * rng.gaussian_matrix(d, cols);
    }
    case InitKind::kSpectral:
      return spectral_init_factor(data, cols);
    case InitKind::kExplicit:
      if (cfg.init_factor.rows() != d) {
        throw InvalidInput("solve: explicit init factor has wrong dimension");
      }
      return cfg.init_factor;
  }
  throw InvalidInput("solve: unknown init kind");
}

double trace_error_factored(const Mat& u, const Mat* truth) {
  if (truth == nullptr) return std::nan("");
  return factor_bw_dist(u, *truth);
}

// grad_fro for a factored iterate; forms the d x d map, so only used at
// record points.
double grad_fro_from_weights(const SensingSet& data, const Vec& w) {
  const double n = static_cast<double>(data.count());
  Mat map = data.vectors().transpose() * (w.asDiagonal() * data.vectors()) / n;
  map.diagonal().array() -= 1.0;
  return map.norm();
}

SolveResult solve_factored(const SensingSet& data, const SolverConfig& cfg,
                           const Mat* truth_factor) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  res.factored = true;
  res.factor = initial_factor(data, cfg);

  FactoredEval ev =
      eval_factored(res.factor, data, cfg.safeguard_eps, cfg.reduction);
  auto record = [&](int k) {
    res.trace.rows.push_back(
        {k, ev.energy, grad_fro_from_weights(data, ev.weights), ev.riem2,
         trace_error_factored(res.factor, truth_factor), now_seconds(start)});
  };
  record(0);

  int k = 0;
  while (k < cfg.max_iters && ev.riem2 > cfg.grad_tol) {
    res.factor = (1.0 - cfg.eta) * res.factor + cfg.eta * ev.map_applied;
    ++k;
    if (smallest_singular_ratio(res.factor) < 1e-12) {
      res.trace.rank_collapse = true;
    }
    ev = eval_factored(res.factor, data, cfg.safeguard_eps, cfg.reduction);
    if (k % cfg.record_every == 0 || k == cfg.max_iters ||
        ev.riem2 <= cfg.grad_tol) {
      record(k);
    }
  }
  res.iterations = k;
  return res;
}

SolveResult solve_full(const SensingSet& data, const SolverConfig& cfg,
                       const Mat* truth_factor) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  res.factored = false;
  Mat u0 = initial_factor(data, cfg);
  res.full = SymMatrix(u0 * u0.transpose());
  SymMatrix truth_full;
  if (truth_factor != nullptr) {
    truth_full = SymMatrix(*truth_factor * truth_factor->transpose());
  }

  FullEval ev = eval_full(res.full, data, cfg.safeguard_eps, cfg.reduction);
  auto record = [&](int k) {
    Mat grad = -ev.map.mat();
    grad.diagonal().array() += 1.0;
    const double err = truth_factor == nullptr
                           ? std::nan("")
                           : sqrt_diff_norm(res.full, truth_full);
    res.trace.rows.push_back(
        {k, ev.energy, grad.norm(), ev.riem2, err, now_seconds(start)});
  };
  record(0);

  int k = 0;
  const Index d = data.dim();
  while (k < cfg.max_iters && ev.riem2 > cfg.grad_tol) {
    Mat m = (1.0 - cfg.eta) * Mat::Identity(d, d) + cfg.eta * ev.map.mat();
    res.full = SymMatrix(m * res.full.mat() * m);
    ++k;
    ev = eval_full(res.full, data, cfg.safeguard_eps, cfg.reduction);
    if (k % cfg.record_every == 0 || k == cfg.max_iters ||
        ev.riem2 <= cfg.grad_tol) {
      record(k);
    }
  }
  res.iterations = k;
  return res;
}

SolveResult solve_sgd(const SensingSet& data, const SolverConfig& cfg,
                      const Mat* truth_factor) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  res.factored = true;
  res.factor = initial_factor(data, cfg);
  const Index n = data.count();
  const double eta = cfg.schedule == StepSchedule::kSgdInvSqrt
                         ? 1.0 / std::sqrt(static_cast<double>(n))
                         : cfg.eta;

  FactoredEval ev =
      eval_factored(res.factor, data, cfg.safeguard_eps, cfg.reduction);
  auto record = [&](int k) {
    res.trace.rows.push_back(
        {k, ev.energy, grad_fro_from_weights(data, ev.weights), ev.riem2,
         trace_error_factored(res.factor, truth_factor), now_seconds(start)});
  };
  record(0);

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(substream(cfg.seed, 0x5D5));

  int step = 0;
  bool done = ev.riem2 <= cfg.grad_tol;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Index idx : order) {
      res.factor = bwsgd_step(res.factor, data.vectors().row(idx).transpose(),
                              data.values()(idx), eta, cfg.safeguard_eps);
      ++step;
      const bool due = step % cfg.record_every == 0 ||
                       (epoch == cfg.epochs - 1 && idx == order.back());
      if (due) {
        ev = eval_factored(res.factor, data, cfg.safeguard_eps, cfg.reduction);
        record(step);
        if (ev.riem2 <= cfg.grad_tol) {
          done = true;
          break;
        }
      }
    }
  }
  res.iterations = step;
  return res;
}

}  // namespace

SolveResult solve(const SensingSet& data, const SolverConfig& config,
                  const Mat* truth_factor) {
  config.validate();
  switch (config.algorithm) {
    case Algorithm::kBwGdFactored:
      return solve_factored(data, config, truth_factor);
    case Algorithm::kBwGdFull:
      return solve_full(data, config, truth_factor);
    case Algorithm::kBwSgd:
      return solve_sgd(data, config, truth_factor);
  }
  throw InvalidInput("solve: unknown algorithm");
}

namespace {

Certificate certificate_impl(const Mat& range_basis, const SymMatrix& sigma,
                             const SensingSet& data, double tol) {
  Certificate c;
  SymMatrix map = fixed_point_map(sigma, data);
  Mat p = range_basis * range_basis.transpose();
  c.foc1_residual = (p * map.mat() * p - p).norm();
  EigDecomp e = sym_eig(map);
  const double top = e.values.size() > 0 ? e.values(0) : 0.0;
  c.foc2_max_excess = std::max(0.0, top - 1.0);
  c.certified = c.foc1_residual <= tol && c.foc2_max_excess <= tol;
  return c;
}

}  // namespace

Certificate stationarity_certificate(const SymMatrix& sigma,
                                     const SensingSet& data, double tol) {
  EigDecomp e = sym_eig(sigma);
  const Index rank = numeric_rank(e.values);
  return certificate_impl(e.vectors.leftCols(rank), sigma, data, tol);
}

Certificate stationarity_certificate(const Mat& u, const SensingSet& data,
                                     double tol) {
  Eigen::JacobiSVD<Mat> svd(u, Eigen::ComputeThinU);
  const Vec& s = svd.singularValues();
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > kDefaultRankTol * s(0)) ++rank;
  }
  return certificate_impl(svd.matrixU().leftCols(rank),
                          SymMatrix(u * u.transpose()), data, tol);
}

double second_difference(const std::function<double(double)>& f, double t0,
                         double h) {
  if (!(h > 0.0)) {
    throw InvalidInput("second_difference: need h > 0");
  }
  return (f(t0 - h) - 2.0 * f(t0) + f(t0 + h)) / (h * h);
}

double geodesic_second_derivative(const SymMatrix& s0, const SymMatrix& s1,
                                  const SensingSet& data, double h,
                                  GeodesicKind kind) {
  if (kind == GeodesicKind::kBuresWasserstein) {
    // Build the path once; transport_map failures propagate to the caller.
    TransportMap tm = transport_map(s0, s1);
    const Index d = s0.dim();
    auto f = [&](double t) {
      Mat m =
          Mat::Identity(d, d) + t * (tm.matrix.mat() - Mat::Identity(d, d));
      return energy(SymMatrix(m * s0.mat() * m), data);
    };
    return second_difference(f, h, h);
  }
  auto f = [&](double t) {
    return energy(geodesic(s0, s1, t, GeodesicKind::kEuclidean), data);
  };
  return second_difference(f, h, h);
}

}  // namespace bwrec
