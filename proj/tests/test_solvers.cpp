#include <doctest.h>

#include <cmath>

#include "bwrec/rng.hpp"
#include "bwrec/sensing.hpp"
#include "bwrec/solvers.hpp"

using namespace bwrec;

namespace {

struct Instance {
  GroundTruth gt;
  SensingSet raw;
  SensingSet white;
  Mat truth_white;

  Instance(Index d, Index r, Index n, std::uint64_t seed, double alpha = 0.0)
      : gt(generate_ground_truth(d, r, SpectrumSpec::Alpha(alpha),
                                 substream(seed, 1))),
        raw(sense(gt, n, substream(seed, 2))),
        white(whiten(raw)),
        truth_white(whiten_factor(gt.factor, *white.whitening())) {}
};

SymMatrix random_pd(Index d, std::uint64_t seed, double ridge = 0.5) {
  Rng rng(seed);
  Mat b = rng.gaussian_matrix(d, d);
  return SymMatrix(b * b.transpose() + ridge * Mat::Identity(d, d));
}

}  // namespace

TEST_CASE("energy single-atom formula and zero-observation case") {
  // One atom (z, y): F = (Tr S + y ||z||^2 - 2 y) / 2 when y = z^T S z.
  Rng rng(3);
  Mat b = rng.gaussian_matrix(3, 3);
  SymMatrix s(b * b.transpose());
  Vec z = rng.gaussian_vector(3);
  const double y = z.dot(s.mat() * z);
  SensingSet data(z.transpose(), Vec::Constant(1, y));
  const double expected = (s.trace() + y * z.squaredNorm() - 2.0 * y) / 2.0;
  CHECK(energy(s, data) == doctest::Approx(expected).epsilon(1e-12));

  // All y = 0: F = Tr(Sigma) / 2.
  SensingSet zeros(rng.gaussian_matrix(5, 3), Vec::Zero(5));
  CHECK(energy(s, zeros) == doctest::Approx(s.trace() / 2.0));
}

TEST_CASE("energy matches the dense distance oracle on materialized atoms") {
  Instance inst(3, 2, 4, 7);
  SymMatrix sigma = random_pd(3, 8);
  // Brute force: (1/2n) sum_i d_BW^2(y_i z_i z_i^T, Sigma).
  double brute = 0.0;
  for (Index i = 0; i < inst.white.count(); ++i) {
    Vec z = inst.white.vectors().row(i).transpose();
    SymMatrix atom(inst.white.values()(i) * z * z.transpose());
    brute += bw_dist2(sigma, atom);
  }
  brute /= 2.0 * static_cast<double>(inst.white.count());
  CHECK(energy(sigma, inst.white) == doctest::Approx(brute).epsilon(1e-10));
  CHECK(energy_factored(sqrt_psd(sigma).mat(), inst.white) ==
        doctest::Approx(brute).epsilon(1e-10));
}

TEST_CASE("energy_sqrt_residual scalar case and exact-fit zero") {
  // d = 1: Sigma = 4, x = 1, y = 1 -> (2 - 1)^2 / 2 = 0.5.
  Mat x(1, 1);
  x << 1.0;
  SensingSet one(x, Vec::Ones(1));
  CHECK(energy_sqrt_residual(SymMatrix(4.0 * Mat::Identity(1, 1)), one) ==
        doctest::Approx(0.5));

  // At the planted matrix the raw residual is exactly zero.
  Instance inst(4, 2, 30, 9);
  CHECK(energy_sqrt_residual(inst.gt.s, inst.raw) <= 1e-20);
}

TEST_CASE("energy minus sqrt residual is constant in Sigma on whitened data") {
  Instance inst(5, 2, 80, 11);
  double reference = 0.0;
  for (int k = 0; k < 10; ++k) {
    SymMatrix sigma = random_pd(5, 300 + k);
    const double diff =
        energy(sigma, inst.white) - energy_sqrt_residual(sigma, inst.white);
    if (k == 0) {
      reference = diff;
    } else {
      CHECK(std::abs(diff - reference) <= 1e-10 * (1.0 + std::abs(reference)));
    }
  }
}

TEST_CASE("fixed_point_map matches a brute-force summation") {
  Instance inst(3, 2, 5, 13);
  SymMatrix sigma = random_pd(3, 14);
  Mat brute = Mat::Zero(3, 3);
  for (Index i = 0; i < inst.white.count(); ++i) {
    Vec z = inst.white.vectors().row(i).transpose();
    const double q = z.dot(sigma.mat() * z);
    brute += std::sqrt(inst.white.values()(i)) / std::sqrt(q) * z *
             z.transpose();
  }
  brute /= static_cast<double>(inst.white.count());
  CHECK((fixed_point_map(sigma, inst.white).mat() - brute).norm() <= 1e-12);
}

TEST_CASE("fixed_point_map at the whitened truth is the identity") {
  Instance inst(6, 3, 240, 15);
  SymMatrix sigma_w(inst.truth_white * inst.truth_white.transpose());
  SymMatrix map = fixed_point_map(sigma_w, inst.white);
  CHECK((map.mat() - Mat::Identity(6, 6)).norm() <= 1e-10);

  // All-zero observations give the zero map and gradient I.
  Rng rng(16);
  SensingSet zeros(rng.gaussian_matrix(10, 4), Vec::Zero(10));
  SymMatrix any = random_pd(4, 17);
  CHECK(fixed_point_map(any, zeros).mat().norm() == 0.0);
  CHECK((energy_grad(any, zeros).mat() - Mat::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("energy_grad vanishes at the whitened truth") {
  Instance inst(8, 3, 240, 19);
  SymMatrix sigma_w(inst.truth_white * inst.truth_white.transpose());
  CHECK(energy_grad(sigma_w, inst.white).norm() <= 1e-9 * 8);
}

TEST_CASE("pairwise tree reduction agrees with sequential") {
  Instance inst(6, 2, 20000, 21);
  Rng rng(22);
  Mat u = rng.gaussian_matrix(6, 2);
  Mat seq = fixed_point_map_apply(u, inst.white, kDefaultSafeguardEps,
                                  ReductionMode::kSequential);
  Mat tree = fixed_point_map_apply(u, inst.white, kDefaultSafeguardEps,
                                   ReductionMode::kPairwiseTree);
  CHECK((seq - tree).norm() <= 1e-12 * (1.0 + seq.norm()));
}

TEST_CASE("bwgd_step_full scalar fixed point and stationarity") {
  // Single atom in d = 1: one eta = 1 step lands on the atom.
  Mat x(1, 1);
  x << 1.0;
  SensingSet one(x, Vec::Constant(1, 4.0));
  SymMatrix sigma(Mat::Identity(1, 1));
  SymMatrix next = bwgd_step_full(sigma, one, 1.0);
  CHECK(next(0, 0) == doctest::Approx(4.0));

  // Zero gradient keeps the iterate.
  Instance inst(5, 2, 150, 23);
  SymMatrix sigma_w(inst.truth_white * inst.truth_white.transpose());
  SymMatrix stay = bwgd_step_full(sigma_w, inst.white, 1.0);
  CHECK((stay.mat() - sigma_w.mat()).norm() <= 1e-9 * (1.0 + sigma_w.norm()));
}

TEST_CASE("bwgd_step_factored scalar case and gradient-zero case") {
  // d = 1, n = 1, z = 1, y = 1, U = 2, eta = 1 -> U+ = 1.
  Mat x(1, 1);
  x << 1.0;
  SensingSet one(x, Vec::Ones(1));
  Mat u(1, 1);
  u << 2.0;
  CHECK(bwgd_step_factored(u, one, 1.0)(0, 0) == doctest::Approx(1.0));

  Instance inst(5, 2, 150, 25);
  Mat stay = bwgd_step_factored(inst.truth_white, inst.white, 1.0);
  CHECK((stay - inst.truth_white).norm() <=
        1e-9 * (1.0 + inst.truth_white.norm()));
}

TEST_CASE("factored and full steps produce the same next matrix") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Instance inst(6, 2, 40, 400 + seed);
    Rng rng(500 + seed);
    Mat u = rng.gaussian_matrix(6, 2);
    const double eta = 0.25 * static_cast<double>(1 + seed % 4);
    Mat u_next = bwgd_step_factored(u, inst.white, eta);
    SymMatrix full_next =
        bwgd_step_full(SymMatrix(u * u.transpose()), inst.white, eta);
    CHECK((u_next * u_next.transpose() - full_next.mat()).norm() <=
          1e-10 * (1.0 + full_next.norm()));
  }
}

TEST_CASE("bwsgd_step edge cases and streaming loop oracle") {
  Rng rng(27);
  Mat u = rng.gaussian_matrix(2, 1);
  Vec z = rng.gaussian_vector(2);

  // eta = 0 leaves the factor unchanged.
  CHECK((bwsgd_step(u, z, 3.0, 0.0) - u).norm() == 0.0);
  // y = 0 shrinks by (1 - eta).
  CHECK((bwsgd_step(u, z, 0.0, 0.25) - 0.75 * u).norm() <= 1e-15);

  // Five-step streaming pass against an independently written update loop.
  Mat u_lib = u;
  Mat u_ref = u;
  const double eta = 0.3;
  for (int k = 0; k < 5; ++k) {
    Vec zk = rng.gaussian_vector(2);
    const double yk = 0.5 + 0.1 * k;
    u_lib = bwsgd_step(u_lib, zk, yk, eta);
    Vec proj = u_ref.transpose() * zk;
    u_ref = (1.0 - eta) * u_ref +
            (eta * std::sqrt(yk) / proj.norm()) * zk * proj.transpose();
    CHECK((u_lib - u_ref).norm() <= 1e-13 * (1.0 + u_ref.norm()));
  }
}

TEST_CASE("solve terminates immediately when initialized at the truth") {
  Instance inst(6, 2, 240, 29);
  SolverConfig cfg;
  cfg.rank = 2;
  cfg.init = InitKind::kExplicit;
  cfg.init_factor = inst.truth_white;
  cfg.grad_tol = 1e-16;
  SolveResult res = solve(inst.white, cfg, &inst.truth_white);
  CHECK(res.iterations == 0);
  CHECK(res.trace.rows.size() == 1);
  CHECK(res.trace.rows[0].grad_riem2 <= 1e-16);
}

TEST_CASE("solve validates its configuration") {
  Instance inst(4, 2, 40, 31);
  SolverConfig cfg;
  cfg.eta = 1.5;
  CHECK_THROWS_AS(solve(inst.white, cfg), InvalidInput);
  cfg.eta = 0.5;
  cfg.rank = 0;
  CHECK_THROWS_AS(solve(inst.white, cfg), InvalidInput);
  cfg.rank = 2;
  cfg.record_every = 0;
  CHECK_THROWS_AS(solve(inst.white, cfg), InvalidInput);
}

TEST_CASE("descent with unit step: quantitative per-iteration decrease") {
  // F(next) - F(cur) <= -(1/2) ||I - map||^2_Sigma, up to roundoff slack.
  for (std::uint64_t seed : {33u, 34u, 35u}) {
    Instance inst(8, 3, 240, seed);
    SolverConfig cfg;
    cfg.rank = 3;
    cfg.max_iters = 50;
    cfg.record_every = 1;
    cfg.seed = seed;
    SolveResult res = solve(inst.white, cfg, &inst.truth_white);
    for (size_t i = 1; i < res.trace.rows.size(); ++i) {
      const TraceRow& prev = res.trace.rows[i - 1];
      const TraceRow& cur = res.trace.rows[i];
      CHECK(cur.energy - prev.energy <=
            -0.5 * prev.grad_riem2 + 1e-8 * (1.0 + std::abs(prev.energy)));
    }
  }
}

TEST_CASE("gradient matches central finite differences") {
  // energy_grad follows the transport-map convention I - fixed_point_map;
  // the Euclidean derivative of the (1/2n)-scaled energy is half of it.
  Instance inst(5, 3, 100, 37);
  SymMatrix sigma = random_pd(5, 38);
  SymMatrix grad = energy_grad(sigma, inst.white);
  Rng rng(39);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    SymMatrix v(rng.gaussian_matrix(5, 5));
    Mat dir = v.mat() / v.norm();
    const double analytic = 0.5 * (grad.mat().array() * dir.array()).sum();
    const double fplus = energy(SymMatrix(sigma.mat() + h * dir), inst.white);
    const double fminus = energy(SymMatrix(sigma.mat() - h * dir), inst.white);
    const double fd = (fplus - fminus) / (2.0 * h);
    CHECK(std::abs(analytic - fd) <= 1e-4 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("solve records rank collapse when the data drives the factor to zero") {
  Rng rng(41);
  SensingSet zeros(rng.gaussian_matrix(12, 3), Vec::Zero(12));
  SolverConfig cfg;
  cfg.rank = 2;
  cfg.max_iters = 5;
  cfg.seed = 42;
  SolveResult res = solve(zeros, cfg);
  CHECK(res.trace.rank_collapse);
}

TEST_CASE("stationarity certificate at the whitened truth and at bad points") {
  Instance inst(6, 2, 240, 43);
  Certificate good = stationarity_certificate(inst.truth_white, inst.white, 1e-8);
  CHECK(good.certified);
  CHECK(good.foc1_residual <= 1e-8);
  CHECK(good.foc2_max_excess <= 1e-8);

  // d = 2 counterexample: all atoms on e1, candidate supported on e2.
  Mat x(4, 2);
  x << 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0;
  SensingSet aligned(x, Vec::Ones(4));
  Mat ortho = Mat::Zero(2, 1);
  ortho(1, 0) = 1.0;
  Certificate bad = stationarity_certificate(ortho, aligned, 1e-8);
  CHECK_FALSE(bad.certified);

  // A far-away random matrix fails certification.
  Certificate far = stationarity_certificate(
      SymMatrix(100.0 * Mat::Identity(6, 6)), inst.white, 1e-8);
  CHECK_FALSE(far.certified);
}

TEST_CASE("certificate soundness: certified solutions are accurate") {
  for (std::uint64_t seed : {45u, 46u, 47u}) {
    Instance inst(8, 3, 240, seed);
    SolverConfig cfg;
    cfg.rank = 3;
    cfg.max_iters = 400;
    cfg.seed = seed;
    cfg.record_every = 100;
    SolveResult res = solve(inst.white, cfg, &inst.truth_white);
    Certificate cert = stationarity_certificate(res.factor, inst.white, 1e-8);
    if (cert.certified) {
      const double err = sqrt_diff_norm_factored(res.factor, inst.truth_white);
      CHECK(err <= 1e-6 * inst.truth_white.norm());
    }
  }
}

TEST_CASE("second_difference calibrates on a quadratic") {
  auto quadratic = [](double t) { return t * t; };
  CHECK(second_difference(quadratic, 1e-3, 1e-3) ==
        doctest::Approx(2.0).epsilon(1e-6));
  CHECK_THROWS_AS(second_difference(quadratic, 0.0, 0.0), InvalidInput);
}

TEST_CASE("euclidean geodesic second derivative is nonnegative on PD pairs") {
  Instance inst(4, 2, 120, 49);
  SymMatrix s0 = random_pd(4, 50);
  SymMatrix s1 = random_pd(4, 51);
  const double curv = geodesic_second_derivative(s0, s1, inst.white, 1e-4,
                                                 GeodesicKind::kEuclidean);
  CHECK(curv >= -1e-6);
}

TEST_CASE("bwsgd epoch trend: larger datasets reach smaller gradient floors") {
  GroundTruth gt = generate_ground_truth(10, 3, SpectrumSpec::Alpha(0.0), 53);
  auto min_grad = [&](Index n, std::uint64_t seed) {
    SensingSet data = whiten(sense(gt, n, seed));
    SolverConfig cfg;
    cfg.algorithm = Algorithm::kBwSgd;
    cfg.schedule = StepSchedule::kSgdInvSqrt;
    cfg.rank = 3;
    cfg.seed = seed;
    cfg.record_every = std::max<int>(1, static_cast<int>(n / 50));
    SolveResult res = solve(data, cfg);
    double best = res.trace.rows.front().grad_riem2;
    for (const TraceRow& r : res.trace.rows) {
      best = std::min(best, r.grad_riem2);
    }
    return best;
  };
  const double small = min_grad(1000, 54);
  const double large = min_grad(10000, 54);
  CHECK(large < small);
}
