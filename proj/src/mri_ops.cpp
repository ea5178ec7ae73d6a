#include "recon/mri_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "recon/errors.hpp"
#include "recon/fft.hpp"
#include "recon/rng.hpp"

namespace recon::mri {

namespace {

void check_same_shape(const ComplexImage& m, const CoilStack& s) {
  if (m.height() != s.height() || m.width() != s.width()) {
    throw DimensionError("image and coil stack shapes disagree");
  }
}

void check_same_shape(const CoilStack& a, const CoilStack& b) {
  if (a.coils() != b.coils() || a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("coil stack shapes disagree");
  }
}

void check_mask(const CoilStack& k, const SamplingMask& mask) {
  if (mask.width() != k.width()) {
    throw DimensionError("mask width does not match k-space width");
  }
}

}  // namespace

CoilStack coil_expand(const ComplexImage& m, const SensitivityMaps& maps) {
  check_same_shape(m, maps);
  CoilStack out(maps.coils(), maps.height(), maps.width());
  const std::size_t plane = static_cast<std::size_t>(m.height()) * m.width();
  for (int i = 0; i < maps.coils(); ++i) {
    const Cplx* s = maps.coil(i);
    Cplx* o = out.coil(i);
    for (std::size_t p = 0; p < plane; ++p) o[p] = s[p] * m.data()[p];
  }
  return out;
}

CoilKSpace forward_model(const ComplexImage& m, const SensitivityMaps& maps,
                         const SamplingMask& mask) {
  check_same_shape(m, maps);
  if (mask.width() != m.width()) {
    throw DimensionError("mask width does not match image width");
  }
  CoilKSpace out = coil_expand(m, maps);
  for (int i = 0; i < out.coils(); ++i) {
    fft::forward_centered(out.coil(i), out.coil(i), out.height(), out.width());
  }
  return apply_mask(out, mask);
}

ComplexImage adjoint_recon(const CoilKSpace& k, const SensitivityMaps& maps) {
  check_same_shape(k, maps);
  ComplexImage out(k.height(), k.width());
  const std::size_t plane = static_cast<std::size_t>(k.height()) * k.width();
  std::vector<Cplx> coil_img(plane);
  for (int i = 0; i < k.coils(); ++i) {
    fft::inverse_centered(k.coil(i), coil_img.data(), k.height(), k.width());
    const Cplx* s = maps.coil(i);
    for (std::size_t p = 0; p < plane; ++p) {
      out.data()[p] += std::conj(s[p]) * coil_img[p];
    }
  }
  return out;
}

ComplexImage zero_fill(const CoilKSpace& k_u, const SensitivityMaps& maps) {
  return adjoint_recon(k_u, maps);
}

CoilKSpace apply_mask(const CoilKSpace& k, const SamplingMask& mask) {
  check_mask(k, mask);
  CoilKSpace out = k;
  for (int i = 0; i < out.coils(); ++i) {
    Cplx* plane = out.coil(i);
    for (int r = 0; r < out.height(); ++r) {
      Cplx* row = plane + static_cast<std::size_t>(r) * out.width();
      for (int c = 0; c < out.width(); ++c) {
        if (!mask.column_acquired(c)) row[c] = Cplx{0.0, 0.0};
      }
    }
  }
  return out;
}

SamplingMask make_mask(int w, double accel, int n_center,
                       double density_exponent, std::uint64_t seed) {
  if (w < 1 || n_center < 0 || n_center > w) {
    throw ConfigError("mask width/center configuration invalid");
  }
  if (accel < 1.0) throw ConfigError("acceleration factor must be >= 1");
  const int budget = static_cast<int>(std::lround(static_cast<double>(w) / accel));
  if (budget < n_center) {
    throw ConfigError("line budget round(W/R) = " + std::to_string(budget) +
                      " is below n_center = " + std::to_string(n_center));
  }

  SamplingMask mask;
  mask.columns.assign(static_cast<std::size_t>(w), 0);
  mask.accel = accel;
  mask.n_center = n_center;
  mask.seed = seed;

  const int center_start = mask_center_start(w, n_center);
  for (int c = center_start; c < center_start + n_center; ++c) mask.columns[c] = 1;

  std::vector<int> candidates;
  std::vector<double> weights;
  const double half = static_cast<double>(w) / 2.0;
  for (int c = 0; c < w; ++c) {
    if (mask.columns[c]) continue;
    candidates.push_back(c);
    const double x = std::abs(c - w / 2) / half;  // 0 at center, 1 at far edge
    weights.push_back(std::pow(std::max(0.0, 1.0 - x), density_exponent));
  }

  // Sequential weighted draws without replacement; once all remaining weight
  // is exhausted fall back to uniform so an all-lines budget (R = 1) fills.
  Rng rng(derive_seed(seed, "mask"));
  int remaining = budget - n_center;
  while (remaining > 0 && !candidates.empty()) {
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc || i + 1 == weights.size()) {
          pick = i;
          break;
        }
      }
      // Guard against picking a zero-weight tail entry through rounding.
      while (pick > 0 && weights[pick] == 0.0) --pick;
    } else {
      pick = static_cast<std::size_t>(rng.below(candidates.size()));
    }
    mask.columns[static_cast<std::size_t>(candidates[pick])] = 1;
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
    --remaining;
  }
  return mask;
}

}  // namespace recon::mri
