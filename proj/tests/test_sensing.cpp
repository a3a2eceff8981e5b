#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bwrec/csv.hpp"
#include "bwrec/psd_linalg.hpp"
#include "bwrec/rng.hpp"
#include "bwrec/sensing.hpp"

using namespace bwrec;

TEST_CASE("generate_ground_truth imposes the requested spectrum exactly") {
  // d=2, r=1, alpha=0: a unit-trace rank-one matrix.
  GroundTruth small = generate_ground_truth(2, 1, SpectrumSpec::Alpha(0.0), 5);
  CHECK(small.s.trace() == doctest::Approx(1.0).epsilon(1e-12));
  EigDecomp e_small = sym_eig(small.s);
  CHECK(e_small.values(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(e_small.values(1)) <= 1e-10);

  // d=32, r=16, alpha=2: eigenvalues (256, 225, ..., 1).
  GroundTruth gt = generate_ground_truth(32, 16, SpectrumSpec::Alpha(2.0), 6);
  EigDecomp e = sym_eig(gt.s);
  for (Index j = 0; j < 16; ++j) {
    const double expected = std::pow(static_cast<double>(16 - j), 2.0);
    CHECK(std::abs(e.values(j) - expected) <= 1e-8 * (1.0 + expected));
  }
  for (Index j = 16; j < 32; ++j) {
    CHECK(std::abs(e.values(j)) <= 1e-8);
  }
  CHECK(e.values(0) == doctest::Approx(256.0));
}

TEST_CASE("generate_ground_truth range spectrum and validation") {
  GroundTruth gt =
      generate_ground_truth(6, 3, SpectrumSpec::Range(0.5, 2.0), 7);
  EigDecomp e = sym_eig(gt.s);
  CHECK(e.values(0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(e.values(1) == doctest::Approx(1.25).epsilon(1e-10));
  CHECK(e.values(2) == doctest::Approx(0.5).epsilon(1e-10));

  CHECK_THROWS_AS(generate_ground_truth(4, 0, SpectrumSpec::Alpha(0.0), 1),
                  InvalidInput);
  CHECK_THROWS_AS(generate_ground_truth(4, 5, SpectrumSpec::Alpha(0.0), 1),
                  InvalidInput);
  // Determinism.
  GroundTruth a = generate_ground_truth(5, 2, SpectrumSpec::Alpha(1.0), 9);
  GroundTruth b = generate_ground_truth(5, 2, SpectrumSpec::Alpha(1.0), 9);
  CHECK((a.factor - b.factor).norm() == 0.0);
}

TEST_CASE("sense coordinate cases and nonnegativity") {
  // S = e1 e1^T, x = (3, 4): y = 9.
  GroundTruth gt;
  gt.rank = 1;
  gt.factor = Mat::Zero(2, 1);
  gt.factor(0, 0) = 1.0;
  gt.s = SymMatrix(gt.factor * gt.factor.transpose());
  Vec x(2);
  x << 3.0, 4.0;
  CHECK((gt.factor.transpose() * x).squaredNorm() == doctest::Approx(9.0));

  // S = I_2: y = ||x||^2 for every sample.
  GroundTruth id;
  id.rank = 2;
  id.factor = Mat::Identity(2, 2);
  id.s = SymMatrix::Identity(2);
  SensingSet data = sense(id, 50, 11);
  for (Index i = 0; i < data.count(); ++i) {
    CHECK(data.values()(i) ==
          doctest::Approx(data.row_sqnorms()(i)).epsilon(1e-12));
    CHECK(data.values()(i) >= 0.0);
  }
}

TEST_CASE("sense Monte-Carlo mean matches the trace") {
  GroundTruth gt = generate_ground_truth(6, 2, SpectrumSpec::Alpha(1.0), 13);
  const Index n = 10000;
  SensingSet data = sense(gt, n, 14);
  const double mean_y = data.values().mean();
  // Var(y) = 2 ||S||_F^2; allow five standard errors.
  const double se = std::sqrt(2.0 * gt.s.norm() * gt.s.norm() /
                              static_cast<double>(n));
  CHECK(std::abs(mean_y - gt.s.trace()) <= 5.0 * se);
}

TEST_CASE("whiten identity case, hand case, and second-moment contract") {
  // Vectors whose empirical second moment is already I.
  Mat x(2, 2);
  x << std::sqrt(2.0), 0.0, 0.0, std::sqrt(2.0);
  SensingSet already(x, Vec::Ones(2));
  SensingSet w = whiten(already);
  CHECK((w.vectors() - x).norm() <= 1e-12);

  // n = d = 2 with x1 = (2,0), x2 = (0,2): C = 2I, z_i = x_i / sqrt(2).
  Mat x2(2, 2);
  x2 << 2.0, 0.0, 0.0, 2.0;
  SensingSet hand(x2, Vec::Ones(2));
  SensingSet wh = whiten(hand);
  CHECK((wh.vectors() - x2 / std::sqrt(2.0)).norm() <= 1e-12);
  CHECK(wh.whitened());
  CHECK(wh.whitening().has_value());

  // Seeded data: empirical second moment of z equals I.
  GroundTruth gt = generate_ground_truth(8, 3, SpectrumSpec::Alpha(0.0), 15);
  SensingSet data = sense(gt, 400, 16);
  SensingSet white = whiten(data);
  Mat moment = white.vectors().transpose() * white.vectors() /
               static_cast<double>(white.count());
  CHECK((moment - Mat::Identity(8, 8)).norm() <= 1e-8 * 8);
  CHECK((white.values() - data.values()).norm() == 0.0);

  CHECK_THROWS_AS(whiten(white), InvalidInput);
}

TEST_CASE("whiten rejects singular second moments with a helpful error") {
  Mat x(2, 3);  // n = 2 < d = 3
  x << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  SensingSet data(x, Vec::Ones(2));
  CHECK_THROWS_WITH_AS(whiten(data),
                       doctest::Contains("need n >= d"), NotPd);
}

TEST_CASE("unwhiten_estimate inverts the whitening map") {
  // L = sqrt(2) I, estimate 2S -> S.
  Rng rng(21);
  Mat b = rng.gaussian_matrix(3, 3);
  SymMatrix s(b * b.transpose());
  CholeskyFactor l(std::sqrt(2.0) * Mat::Identity(3, 3));
  SymMatrix back = unwhiten_estimate(SymMatrix(2.0 * s.mat()), l);
  CHECK((back.mat() - s.mat()).norm() <= 1e-12 * (1.0 + s.norm()));

  // Identity leaves the estimate unchanged.
  CholeskyFactor id(Mat::Identity(3, 3));
  CHECK((unwhiten_estimate(s, id).mat() - s.mat()).norm() == 0.0);

  // Round trip through real whitening: L^T S L is the whitened optimum and
  // unwhitening recovers S.
  GroundTruth gt = generate_ground_truth(5, 2, SpectrumSpec::Alpha(1.0), 23);
  SensingSet data = sense(gt, 60, 24);
  SensingSet white = whiten(data);
  const CholeskyFactor& lw = *white.whitening();
  SymMatrix truth_w(whiten_factor(gt.factor, lw) *
                    whiten_factor(gt.factor, lw).transpose());
  SymMatrix rec = unwhiten_estimate(truth_w, lw);
  CHECK((rec.mat() - gt.s.mat()).norm() <= 1e-12 * (1.0 + gt.s.norm()));

  // Factor-space version agrees.
  Mat back_f = unwhiten_factor(whiten_factor(gt.factor, lw), lw);
  CHECK((back_f - gt.factor).norm() <= 1e-12 * (1.0 + gt.factor.norm()));
}

TEST_CASE("perturb coordinate case, zero case, and linearity") {
  Mat x(1, 2);
  x << 1.0, 3.0;
  Vec y(1);
  y << 4.0;
  SensingSet data(x, y);

  // Delta = e2 e2^T adds (x^T e2)^2 = 9.
  Mat e2 = Mat::Zero(2, 1);
  e2(1, 0) = 1.0;
  auto [pdata, p] = perturb(data, e2);
  CHECK(pdata.values()(0) == doctest::Approx(13.0));
  CHECK(p.delta(1, 1) == doctest::Approx(1.0));

  // Zero factor leaves y unchanged.
  auto [zdata, zp] = perturb(data, Mat::Zero(2, 1));
  CHECK((zdata.values() - y).norm() == 0.0);

  // Sequential perturbations equal the concatenated factor.
  Rng rng(31);
  GroundTruth gt = generate_ground_truth(4, 1, SpectrumSpec::Alpha(0.0), 32);
  SensingSet base = sense(gt, 20, 33);
  Mat f1 = rng.gaussian_matrix(4, 1);
  Mat f2 = rng.gaussian_matrix(4, 2);
  auto [step1, p1] = perturb(base, f1);
  auto [step2, p2] = perturb(step1, f2);
  Mat cat(4, 3);
  cat << f1, f2;
  auto [joint, pj] = perturb(base, cat);
  CHECK((step2.values() - joint.values()).cwiseAbs().maxCoeff() <= 1e-12);

  // Whitened data cannot be perturbed.
  SensingSet white = whiten(base);
  CHECK_THROWS_AS(perturb(white, f1), InvalidInput);
}

TEST_CASE("default_perturbation_factor matches the trace estimate") {
  GroundTruth gt = generate_ground_truth(6, 2, SpectrumSpec::Alpha(1.0), 41);
  SensingSet data = sense(gt, 500, 42);
  Mat f = default_perturbation_factor(data, 3, 43);
  CHECK(f.cols() == 3);
  CHECK(f.squaredNorm() == doctest::Approx(data.values().mean()).epsilon(1e-10));
}

TEST_CASE("rip_check degenerate and Gaussian cases") {
  // d = 1, all x_i = 1: every quadratic form is identical, ratio 0.
  Mat ones = Mat::Ones(4, 1);
  SensingSet degenerate(ones, Vec::Ones(4));
  RipCheckResult res = rip_check(degenerate, 5, 1, 3);
  CHECK(res.min_ratio == doctest::Approx(0.0));
  CHECK(res.max_ratio == doctest::Approx(0.0));

  // Gaussian data keeps the paired differences bounded away from zero.
  GroundTruth gt = generate_ground_truth(8, 2, SpectrumSpec::Alpha(0.0), 51);
  SensingSet data = sense(gt, 640, 52);
  RipCheckResult g = rip_check(data, 10, 2, 53);
  CHECK(g.min_ratio > 0.0);
  CHECK(g.max_ratio >= g.min_ratio);

  // Odd sample counts are rejected.
  Mat x3 = Mat::Ones(3, 1);
  SensingSet odd(x3, Vec::Ones(3));
  CHECK_THROWS_AS(rip_check(odd, 2, 1, 1), InvalidInput);
}

TEST_CASE("sensing CSV round trip preserves every float and the header") {
  GroundTruth gt = generate_ground_truth(4, 2, SpectrumSpec::Alpha(1.0), 61);
  SensingSet data = sense(gt, 8, 62);
  const std::string path = "test_sensing_roundtrip.csv";
  save_sensing_csv(data, path);

  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "4,8,false");
  f.close();

  SensingSet back = load_sensing_csv(path);
  CHECK(back.count() == data.count());
  CHECK(back.dim() == data.dim());
  CHECK((back.vectors() - data.vectors()).norm() == 0.0);
  CHECK((back.values() - data.values()).norm() == 0.0);
  CHECK(back.whitened() == false);
  std::filesystem::remove(path);

  // Whitened sets keep their flag (the factor itself is not serialized).
  SensingSet white = whiten(data);
  save_sensing_csv(white, path);
  SensingSet wback = load_sensing_csv(path);
  CHECK(wback.whitened());
  CHECK((wback.vectors() - white.vectors()).norm() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("SensingSet rejects negative observations and empty input") {
  Mat x = Mat::Ones(1, 2);
  Vec y(1);
  y << -0.5;
  CHECK_THROWS_AS(SensingSet(x, y), InvalidInput);
}
