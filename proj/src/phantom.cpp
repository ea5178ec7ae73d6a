#include "recon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "recon/errors.hpp"
#include "recon/rng.hpp"

namespace recon::data {

namespace {

struct Ellipse {
  double cx, cy, ax, ay, angle, intensity;
};

struct Segment {
  double x0, y0, x1, y1, half_width, intensity;
};

// Distance from point to segment, in normalized coordinates.
double segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = s.x0 + t * dx, qy = s.y0 + t * dy;
  return std::hypot(px - qx, py - qy);
}

}  // namespace

mri::ComplexImage gen_phantom(int h, int w, std::uint64_t seed) {
  if (h < 32 || w < 32 || h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("phantom sides must be even and >= 32");
  }
  Rng rng(derive_seed(seed, "phantom"));

  const int n_ellipses = 5 + static_cast<int>(rng.below(11));  // 5..15
  std::vector<Ellipse> ellipses;
  ellipses.reserve(static_cast<std::size_t>(n_ellipses));
  // First ellipse is a large positive body so the magnitude never collapses.
  ellipses.push_back({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                      rng.uniform(0.55, 0.8), rng.uniform(0.55, 0.8),
                      rng.uniform(0.0, std::numbers::pi), rng.uniform(0.6, 1.0)});
  for (int i = 1; i < n_ellipses; ++i) {
    ellipses.push_back({rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                        rng.uniform(0.05, 0.35), rng.uniform(0.05, 0.35),
                        rng.uniform(0.0, std::numbers::pi),
                        rng.uniform(-0.5, 0.7)});
  }

  const int n_segments = 2 + static_cast<int>(rng.below(4));  // 2..5
  std::vector<Segment> segments;
  for (int i = 0; i < n_segments; ++i) {
    const double x0 = rng.uniform(-0.7, 0.7), y0 = rng.uniform(-0.7, 0.7);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.3, 1.0);
    segments.push_back({x0, y0, x0 + len * std::cos(angle), y0 + len * std::sin(angle),
                        rng.uniform(0.008, 0.02), rng.uniform(0.3, 0.8)});
  }

  // Low-order phase polynomial, bounded to roughly +-1 rad.
  double ph[6];
  for (double& c : ph) c = rng.uniform(-0.5, 0.5);

  mri::ComplexImage img(h, w);
  std::vector<double> mag(static_cast<std::size_t>(h) * w, 0.0);
  double max_mag = 0.0;
  for (int r = 0; r < h; ++r) {
    const double y = (2.0 * r - h + 1.0) / h;
    for (int c = 0; c < w; ++c) {
      const double x = (2.0 * c - w + 1.0) / w;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double ca = std::cos(e.angle), sa = std::sin(e.angle);
        const double u = ((x - e.cx) * ca + (y - e.cy) * sa) / e.ax;
        const double t = (-(x - e.cx) * sa + (y - e.cy) * ca) / e.ay;
        if (u * u + t * t <= 1.0) v += e.intensity;
      }
      for (const auto& s : segments) {
        if (segment_distance(x, y, s) <= s.half_width) v += s.intensity;
      }
      v = std::max(0.0, v);
      mag[static_cast<std::size_t>(r) * w + c] = v;
      max_mag = std::max(max_mag, v);
    }
  }

  // max_mag > 0 is guaranteed by the body ellipse covering the center.
  for (int r = 0; r < h; ++r) {
    const double y = (2.0 * r - h + 1.0) / h;
    for (int c = 0; c < w; ++c) {
      const double x = (2.0 * c - w + 1.0) / w;
      const double phase = ph[0] + ph[1] * x + ph[2] * y + ph[3] * x * x +
                           ph[4] * x * y + ph[5] * y * y;
      const double m = mag[static_cast<std::size_t>(r) * w + c] / max_mag;
      img.at(r, c) = std::polar(m, phase);
    }
  }
  return img;
}

mri::SensitivityMaps gen_sensitivity_maps(int h, int w, int n_coils,
                                          std::uint64_t seed) {
  if (n_coils < 1) throw DimensionError("need at least one coil");
  Rng rng(derive_seed(seed, "sens"));

  mri::SensitivityMaps maps(n_coils, h, w);
  std::vector<double> cx(static_cast<std::size_t>(n_coils));
  std::vector<double> cy(static_cast<std::size_t>(n_coils));
  std::vector<double> sigma(static_cast<std::size_t>(n_coils));
  std::vector<double> phx(static_cast<std::size_t>(n_coils));
  std::vector<double> phy(static_cast<std::size_t>(n_coils));
  std::vector<double> ph0(static_cast<std::size_t>(n_coils));
  for (int i = 0; i < n_coils; ++i) {
    // Coils sit on a ring just outside the object, with a little jitter.
    const double theta =
        2.0 * std::numbers::pi * (i + rng.uniform(-0.15, 0.15)) / n_coils;
    const double radius = rng.uniform(0.75, 0.95);
    cx[i] = radius * std::cos(theta);
    cy[i] = radius * std::sin(theta);
    sigma[i] = rng.uniform(0.55, 0.75);
    phx[i] = rng.uniform(-1.0, 1.0);
    phy[i] = rng.uniform(-1.0, 1.0);
    ph0[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  for (int r = 0; r < h; ++r) {
    const double y = (2.0 * r - h + 1.0) / h;
    for (int c = 0; c < w; ++c) {
      const double x = (2.0 * c - w + 1.0) / w;
      double sumsq = 0.0;
      for (int i = 0; i < n_coils; ++i) {
        const double d2 = (x - cx[i]) * (x - cx[i]) + (y - cy[i]) * (y - cy[i]);
        const double g = std::exp(-d2 / (2.0 * sigma[i] * sigma[i]));
        maps.at(i, r, c) = std::polar(g, ph0[i] + phx[i] * x + phy[i] * y);
        sumsq += g * g;
      }
      const double inv = 1.0 / std::sqrt(sumsq);  // lobes never all vanish
      for (int i = 0; i < n_coils; ++i) maps.at(i, r, c) *= inv;
    }
  }
  return maps;
}

}  // namespace recon::data
