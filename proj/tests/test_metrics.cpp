#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "fid_oracle.hpp"
#include "recon/errors.hpp"
#include "recon/metrics.hpp"
#include "recon/phantom.hpp"
#include "recon/rng.hpp"
#include "test_support.hpp"

using namespace recon;
using namespace recon::metrics;

namespace {

mri::ComplexImage scaled(const mri::ComplexImage& img, double k) {
  mri::ComplexImage out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = k * img.data()[i];
  return out;
}

}  // namespace

TEST_CASE("nmse hand values and error cases") {
  Rng rng(1);
  mri::ComplexImage ref = testsup::rand_image(16, 16, rng);
  CHECK(nmse(ref, ref) == 0.0);
  CHECK(nmse(scaled(ref, 2.0), ref) == doctest::Approx(1.0).epsilon(1e-12));

  mri::ComplexImage zero(16, 16);
  CHECK_THROWS_AS(nmse(ref, zero), NumericError);
  mri::ComplexImage other(16, 32);
  CHECK_THROWS_AS(nmse(other, ref), DimensionError);
}

TEST_CASE("nmse is scale-covariant") {
  Rng rng(2);
  mri::ComplexImage ref = testsup::rand_image(24, 24, rng);
  mri::ComplexImage x = testsup::rand_image(24, 24, rng);
  const double base = nmse(x, ref);
  // Power-of-two factors rescale the floating-point arithmetic exactly.
  for (double k : {2.0, 0.5, -4.0})
    CHECK(nmse(scaled(x, k), scaled(ref, k)) == base);
  CHECK(nmse(scaled(x, 3.0), scaled(ref, 3.0)) ==
        doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("fit_stats hand cases") {
  // Two 1-D points {0, 2}: mean 1, covariance 2 with the n-1 divisor.
  std::vector<Eigen::VectorXd> pts(2, Eigen::VectorXd(1));
  pts[0][0] = 0.0;
  pts[1][0] = 2.0;
  FIDStats s = fit_stats(pts);
  CHECK(s.mu[0] == 1.0);
  CHECK(s.sigma(0, 0) == 2.0);
  CHECK(s.n == 2);

  // Identical vectors: zero covariance.
  Rng rng(3);
  Eigen::VectorXd v(5);
  for (int i = 0; i < 5; ++i) v[i] = rng.normal();
  std::vector<Eigen::VectorXd> same(4, v);
  FIDStats zs = fit_stats(same);
  CHECK(zs.sigma.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(fit_stats({v}), DimensionError);
  std::vector<Eigen::VectorXd> ragged{v, Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(fit_stats(ragged), DimensionError);
}

TEST_CASE("fit_stats matches a scalar-loop covariance oracle") {
  Rng rng(4);
  const int d = 6, n = 11;
  std::vector<Eigen::VectorXd> feats;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd f(d);
    for (int j = 0; j < d; ++j) f[j] = rng.normal();
    feats.push_back(f);
  }
  FIDStats s = fit_stats(feats);

  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const auto& f : feats) mean += f[j];
    mean /= n;
    CHECK(std::fabs(s.mu[j] - mean) < 1e-12);
  }
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (const auto& f : feats) acc += (f[r] - s.mu[r]) * (f[c] - s.mu[c]);
      acc /= (n - 1);
      CHECK(std::fabs(s.sigma(r, c) - acc) < 1e-10);
    }
  }
  // Exact symmetry and PSD within tolerance.
  CHECK((s.sigma - s.sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.sigma);
  CHECK(es.eigenvalues().minCoeff() > -1e-8);
}

TEST_CASE("fid analytic identities") {
  Rng rng(5);
  FIDStats a = testsup::random_psd_stats(8, rng);
  CHECK(fid(a, a) < 1e-8);

  // Equal covariances: the trace term cancels, leaving the mean distance.
  FIDStats b = a;
  Eigen::VectorXd delta(8);
  for (int i = 0; i < 8; ++i) delta[i] = rng.normal();
  b.mu = a.mu + delta;
  CHECK(std::fabs(fid(a, b) - delta.squaredNorm()) < 1e-6);

  // Scalar case: (mu_a - mu_b)^2 + a + b - 2 sqrt(ab).
  FIDStats sa, sb;
  sa.mu = Eigen::VectorXd::Constant(1, 1.0);
  sb.mu = Eigen::VectorXd::Constant(1, 4.0);
  sa.sigma = Eigen::MatrixXd::Constant(1, 1, 9.0);
  sb.sigma = Eigen::MatrixXd::Constant(1, 1, 4.0);
  sa.n = sb.n = 3;
  CHECK(fid(sa, sb) == doctest::Approx(9.0 + 9.0 + 4.0 - 12.0).epsilon(1e-12));
}

TEST_CASE("fid matches the general-eigendecomposition oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 4 + (trial % 5) * 3;
    FIDStats a = testsup::random_psd_stats(d, rng);
    FIDStats b = testsup::random_psd_stats(d, rng);
    const double got = fid(a, b);
    const double want = testsup::fid_oracle(a, b);
    CHECK(std::fabs(got - want) / std::max(1.0, std::fabs(want)) < 1e-6);
    // Symmetry of the computed value.
    CHECK(std::fabs(got - fid(b, a)) < 1e-8 * std::max(1.0, got));
  }
}

TEST_CASE("fid input validation") {
  Rng rng(7);
  FIDStats a = testsup::random_psd_stats(4, rng);
  FIDStats b = testsup::random_psd_stats(6, rng);
  CHECK_THROWS_AS(fid(a, b), DimensionError);

  FIDStats bad = testsup::random_psd_stats(4, rng);
  bad.sigma(0, 0) = -5.0;  // clearly not PSD
  CHECK_THROWS_AS(fid(bad, a), NumericError);
}

TEST_CASE("desk extractor is deterministic with fixed dimension") {
  DeskExtractor ex;
  CHECK(ex.dim() == 64);
  mri::ComplexImage img = data::gen_phantom(64, 64, 11);
  Eigen::VectorXd f1 = ex.extract(normalized_magnitude(img));
  Eigen::VectorXd f2 = ex.extract(normalized_magnitude(img));
  CHECK(f1.size() == 64);
  CHECK(f1 == f2);
  CHECK(f1.allFinite());
  // A fresh instance reproduces the same features (seed-fixed weights).
  DeskExtractor ex2;
  CHECK(ex2.extract(normalized_magnitude(img)) == f1);

  mri::ComplexImage other = data::gen_phantom(64, 64, 12);
  CHECK(ex.extract(normalized_magnitude(other)) != f1);
}

TEST_CASE("min-max normalization makes features scale-invariant") {
  DeskExtractor ex;
  mri::ComplexImage img = data::gen_phantom(48, 48, 13);
  Eigen::VectorXd base = ex.extract(normalized_magnitude(img));
  CHECK(ex.extract(normalized_magnitude(scaled(img, 4.0))) == base);

  // Constant image: normalization maps to zero, features well-defined.
  mri::ComplexImage flat(16, 16);
  for (std::size_t i = 0; i < flat.size(); ++i) flat.data()[i] = {2.5, 0.0};
  CHECK(normalized_magnitude(flat).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ex.extract(normalized_magnitude(flat)).allFinite());
}

TEST_CASE("extractor factory") {
  CHECK(make_extractor("desk")->dim() == 64);
  CHECK_THROWS_AS(make_extractor("pretrained"), NotFoundError);
  CHECK_THROWS_AS(make_extractor("inception-v9"), ConfigError);
}

TEST_CASE("fid between image sets: identity, sensitivity, determinism") {
  DeskExtractor ex;
  std::vector<mri::ComplexImage> a;
  for (int i = 0; i < 12; ++i) a.push_back(data::gen_phantom(32, 32, 100 + i));

  // Small sets trigger the size warning on stderr; value contract still holds.
  const double self = fid_between_image_sets(a, a, ex);
  CHECK(self >= 0.0);
  CHECK(self < 1e-6);

  std::vector<mri::ComplexImage> b = a;
  Rng rng(8);
  b[3] = testsup::rand_image(32, 32, rng);
  const double perturbed = fid_between_image_sets(a, b, ex);
  CHECK(perturbed > 0.0);
  CHECK(perturbed == fid_between_image_sets(a, b, ex));
}
