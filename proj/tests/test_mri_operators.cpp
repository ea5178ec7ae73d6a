#include <algorithm>
#include <complex>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "recon/errors.hpp"
#include "recon/fft.hpp"
#include "recon/mri_ops.hpp"
#include "recon/mri_types.hpp"
#include "recon/phantom.hpp"
#include "recon/rng.hpp"
#include "test_support.hpp"

using namespace recon;
using namespace recon::mri;
using testsup::cdot;
using testsup::rand_image;
using testsup::rand_stack;

namespace {

SamplingMask full_mask(int w) {
  SamplingMask m;
  m.columns.assign(static_cast<std::size_t>(w), 1);
  m.accel = 1.0;
  m.n_center = w;
  m.seed = 0;
  return m;
}

SamplingMask empty_mask(int w) {
  SamplingMask m;
  m.columns.assign(static_cast<std::size_t>(w), 0);
  m.accel = 0.0;
  m.n_center = 0;
  m.seed = 0;
  return m;
}

}  // namespace

TEST_CASE("centered fft matches brute-force centered DFT on small images") {
  Rng rng(101);
  const int h = 16, w = 16;
  ComplexImage m = rand_image(h, w, rng);

  ComplexImage got = fft::forward(m);
  std::vector<Cplx> want(m.size());
  testsup::naive_dft_centered(m.data(), want.data(), h, w, -1);
  CHECK(testsup::max_abs_diff(got.data(), want.data(), m.size()) < 1e-8);

  ComplexImage back = fft::inverse(got);
  std::vector<Cplx> want_back(m.size());
  testsup::naive_dft_centered(got.data(), want_back.data(), h, w, +1);
  CHECK(testsup::max_abs_diff(back.data(), want_back.data(), m.size()) < 1e-8);
  CHECK(testsup::max_abs_diff(back.data(), m.data(), m.size()) < 1e-10);
}

TEST_CASE("fft is unitary and linear") {
  Rng rng(7);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{32, 48}, std::pair{64, 64}}) {
    ComplexImage a = rand_image(h, w, rng);
    ComplexImage b = rand_image(h, w, rng);

    ComplexImage fa = fft::forward(a);
    CHECK(testsup::rel_err(fa.norm(), a.norm()) < 1e-12);

    // Parseval: <Fa, Fb> == <a, b>.
    Cplx lhs = cdot(fa.data(), fft::forward(b).data(), a.size());
    Cplx rhs = cdot(a.data(), b.data(), a.size());
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(rhs));

    // Linearity.
    const Cplx alpha{0.3, -1.2};
    ComplexImage combo(h, w);
    for (std::size_t i = 0; i < a.size(); ++i)
      combo.data()[i] = alpha * a.data()[i] + b.data()[i];
    ComplexImage f_combo = fft::forward(combo);
    ComplexImage fb = fft::forward(b);
    for (std::size_t i = 0; i < a.size(); ++i)
      fb.data()[i] += alpha * fa.data()[i];
    CHECK(testsup::max_abs_diff(f_combo.data(), fb.data(), a.size()) < 1e-10);
  }
}

TEST_CASE("fft of constant image concentrates at the DC bin (array center)") {
  const int h = 32, w = 32;
  ComplexImage m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = Cplx{1.0, 0.0};
  ComplexImage k = fft::forward(m);
  // Unitary scaling: DC value is sqrt(H*W).
  CHECK(std::abs(k.at(h / 2, w / 2) - Cplx{32.0, 0.0}) < 1e-10);
  double off = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (r != h / 2 || c != w / 2) off = std::max(off, std::abs(k.at(r, c)));
  CHECK(off < 1e-10);
}

TEST_CASE("coil_expand: uniform map scales the image") {
  const int h = 16, w = 16;
  ComplexImage ones(h, w);
  for (std::size_t i = 0; i < ones.size(); ++i) ones.data()[i] = Cplx{1.0, 0.0};
  SensitivityMaps maps(2, h, w);
  for (std::size_t i = 0; i < ones.size(); ++i) {
    maps.coil(0)[i] = Cplx{0.5, 0.0};
    maps.coil(1)[i] = Cplx{0.25, 0.25};
  }
  CoilStack out = coil_expand(ones, maps);
  for (std::size_t i = 0; i < ones.size(); ++i) {
    CHECK(std::abs(out.coil(0)[i] - Cplx{0.5, 0.0}) < 1e-15);
    CHECK(std::abs(out.coil(1)[i] - Cplx{0.25, 0.25}) < 1e-15);
  }
}

TEST_CASE("coil_expand matches scalar-loop oracle on random inputs") {
  Rng rng(11);
  const int h = 24, w = 32, coils = 5;
  ComplexImage m = rand_image(h, w, rng);
  SensitivityMaps maps = rand_stack(coils, h, w, rng);
  CoilStack got = coil_expand(m, maps);
  for (int i = 0; i < coils; ++i) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        Cplx want = maps.at(i, r, c) * m.at(r, c);
        CHECK(std::abs(got.at(i, r, c) - want) < 1e-12);
      }
    }
  }
}

TEST_CASE("adjoint_recon matches an independently written per-coil oracle") {
  Rng rng(12);
  const int h = 32, w = 32, coils = 4;
  CoilKSpace k = rand_stack(coils, h, w, rng);
  SensitivityMaps maps = data::gen_sensitivity_maps(h, w, coils, 55);

  ComplexImage got = adjoint_recon(k, maps);

  // Oracle: inverse-transform each coil on its own, then accumulate the
  // conjugate-weighted sum pixel by pixel.
  std::vector<Cplx> acc(static_cast<std::size_t>(h) * w, Cplx{0.0, 0.0});
  for (int i = 0; i < coils; ++i) {
    ComplexImage one(h, w);
    std::copy(k.coil(i), k.coil(i) + one.size(), one.data());
    ComplexImage img = fft::inverse(one);
    for (std::size_t p = 0; p < acc.size(); ++p)
      acc[p] += std::conj(maps.coil(i)[p]) * img.data()[p];
  }
  CHECK(testsup::max_abs_diff(got.data(), acc.data(), acc.size()) < 1e-10);
}

TEST_CASE("adjoint_recon of zeros is zero") {
  const int h = 16, w = 16, coils = 3;
  CoilKSpace k(coils, h, w);
  SensitivityMaps maps = data::gen_sensitivity_maps(h, w, coils, 9);
  ComplexImage out = adjoint_recon(k, maps);
  CHECK(out.norm() == 0.0);
}

TEST_CASE("full-mask forward then adjoint reproduces the image") {
  Rng rng(13);
  for (auto [h, w, coils] : {std::tuple{32, 32, 4}, std::tuple{64, 64, 8}}) {
    ComplexImage m = rand_image(h, w, rng);
    SensitivityMaps maps = data::gen_sensitivity_maps(h, w, coils, 77);
    CoilKSpace k = forward_model(m, maps, full_mask(w));
    ComplexImage back = adjoint_recon(k, maps);
    CHECK(testsup::rel_image_err(back, m) < 1e-6);
  }
}

TEST_CASE("adjoint identity holds on random instances") {
  // <A m, y> == <m, A* y> with A = M.F(S.), A* = S^H F^-1 (M.).
  Rng rng(99);
  for (auto [h, w, coils] : {std::tuple{32, 32, 4}, std::tuple{64, 64, 8}}) {
    for (int trial = 0; trial < 25; ++trial) {
      SensitivityMaps maps =
          data::gen_sensitivity_maps(h, w, coils, 1000 + trial);
      SamplingMask mask = make_mask(w, 4.0, w / 8, 0.0, 40 + trial);
      ComplexImage m = rand_image(h, w, rng);
      CoilStack y = rand_stack(coils, h, w, rng);

      CoilKSpace am = forward_model(m, maps, mask);
      CoilStack my = apply_mask(y, mask);
      ComplexImage asty = adjoint_recon(my, maps);

      const std::size_t n = static_cast<std::size_t>(h) * w;
      Cplx lhs{0.0, 0.0};
      for (int i = 0; i < coils; ++i) lhs += cdot(am.coil(i), y.coil(i), n);
      Cplx rhs = cdot(m.data(), asty.data(), n);

      double am_norm = 0.0;
      for (std::size_t i = 0; i < am.size(); ++i)
        am_norm += std::norm(am.data()[i]);
      am_norm = std::sqrt(am_norm);
      double y_norm = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) y_norm += std::norm(y.data()[i]);
      y_norm = std::sqrt(y_norm);

      CHECK(std::abs(lhs - rhs) / (am_norm * y_norm) <= 1e-6);
    }
  }
}

TEST_CASE("forward_model zeroes exactly the masked-out columns") {
  Rng rng(21);
  const int h = 32, w = 32, coils = 4;
  ComplexImage m = rand_image(h, w, rng);
  SensitivityMaps maps = data::gen_sensitivity_maps(h, w, coils, 3);
  SamplingMask mask = make_mask(w, 4.0, 4, 0.0, 17);
  CoilKSpace k = forward_model(m, maps, mask);
  for (int i = 0; i < coils; ++i) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!mask.column_acquired(c)) {
          CHECK(std::abs(k.at(i, r, c)) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("apply_mask is idempotent and the full mask is the identity") {
  Rng rng(31);
  const int h = 16, w = 24, coils = 2;
  CoilKSpace k = rand_stack(coils, h, w, rng);

  CoilKSpace k_id = apply_mask(k, full_mask(w));
  CHECK(testsup::max_abs_diff(k_id.data(), k.data(), k.size()) == 0.0);

  SamplingMask mask = make_mask(w, 3.0, 4, 0.5, 5);
  CoilKSpace once = apply_mask(k, mask);
  CoilKSpace twice = apply_mask(once, mask);
  CHECK(testsup::max_abs_diff(once.data(), twice.data(), k.size()) == 0.0);

  CoilKSpace zeroed = apply_mask(k, empty_mask(w));
  for (std::size_t i = 0; i < zeroed.size(); ++i)
    CHECK(std::abs(zeroed.data()[i]) == 0.0);
}

TEST_CASE("zero_fill equals adjoint of the undersampled data") {
  Rng rng(41);
  const int h = 32, w = 32, coils = 4;
  ComplexImage m = rand_image(h, w, rng);
  SensitivityMaps maps = data::gen_sensitivity_maps(h, w, coils, 8);
  SamplingMask mask = make_mask(w, 4.0, 4, 0.0, 23);
  CoilKSpace ku = forward_model(m, maps, mask);
  ComplexImage a = zero_fill(ku, maps);
  ComplexImage b = adjoint_recon(ku, maps);
  CHECK(testsup::max_abs_diff(a.data(), b.data(), a.size()) == 0.0);
}

TEST_CASE("mask: line budget, center block and determinism") {
  // 256 columns at 4x acceleration -> exactly 64 sampled lines.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SamplingMask mask = make_mask(256, 4.0, 12, 0.0, seed);
    CHECK(mask.lines_acquired() == 64);
    const int start = 256 / 2 - 12 / 2;
    for (int c = start; c < start + 12; ++c) CHECK(mask.column_acquired(c));
  }

  SamplingMask a = make_mask(256, 4.0, 12, 1.5, 7);
  SamplingMask b = make_mask(256, 4.0, 12, 1.5, 7);
  CHECK(a.columns == b.columns);

  SamplingMask c = make_mask(256, 4.0, 12, 1.5, 8);
  CHECK(a.columns != c.columns);

  SamplingMask full = make_mask(64, 1.0, 8, 2.0, 3);
  CHECK(full.lines_acquired() == 64);

  CHECK_THROWS_AS(make_mask(64, 32.0, 12, 0.0, 1), ConfigError);
}

TEST_CASE("mask density exponent pulls samples toward the center") {
  // With a strong center-weighted density, sampled lines outside the always-on
  // center block should sit closer to the middle on average than uniform ones.
  double mean_dist_weighted = 0.0, mean_dist_uniform = 0.0;
  int n_w = 0, n_u = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SamplingMask wm = make_mask(128, 8.0, 4, 6.0, seed);
    SamplingMask um = make_mask(128, 8.0, 4, 0.0, seed);
    const int start = 128 / 2 - 2;
    for (int c = 0; c < 128; ++c) {
      if (c >= start && c < start + 4) continue;
      double d = std::abs(c - 64.0);
      if (wm.column_acquired(c)) mean_dist_weighted += d, ++n_w;
      if (um.column_acquired(c)) mean_dist_uniform += d, ++n_u;
    }
  }
  mean_dist_weighted /= n_w;
  mean_dist_uniform /= n_u;
  CHECK(mean_dist_weighted < 0.8 * mean_dist_uniform);
}

TEST_CASE("undersampled zero-fill is a degraded but related image") {
  ComplexImage m = data::gen_phantom(64, 64, 5);
  SensitivityMaps maps = data::gen_sensitivity_maps(64, 64, 4, 5);
  SamplingMask mask = make_mask(64, 4.0, 8, 1.0, 5);
  CoilKSpace ku = forward_model(m, maps, mask);
  ComplexImage mz = zero_fill(ku, maps);
  double err = testsup::rel_image_err(mz, m);
  CHECK(err > 1e-3);   // genuinely degraded
  CHECK(err < 0.9);    // but still dominated by the true image
}
