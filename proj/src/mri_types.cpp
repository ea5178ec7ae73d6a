#include "recon/mri_types.hpp"

#include <cmath>

#include "recon/errors.hpp"

namespace recon::mri {

namespace {

void check_sides(int h, int w) {
  if (h < 8 || w < 8 || h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("image sides must be even and >= 8, got " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
}

bool finite_range(const Cplx* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i].real()) || !std::isfinite(p[i].imag())) return false;
  }
  return true;
}

double norm_range(const Cplx* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::norm(p[i]);
  return std::sqrt(s);
}

}  // namespace

ComplexImage::ComplexImage(int h, int w) : h_(h), w_(w) {
  check_sides(h, w);
  data_.assign(static_cast<std::size_t>(h) * w, Cplx{0.0, 0.0});
}

ComplexImage::ComplexImage(int h, int w, std::vector<Cplx> data)
    : h_(h), w_(w), data_(std::move(data)) {
  check_sides(h, w);
  if (data_.size() != static_cast<std::size_t>(h) * w) {
    throw DimensionError("image data length does not match shape");
  }
  if (!all_finite()) throw NumericError("image contains non-finite entries");
}

bool ComplexImage::all_finite() const { return finite_range(data_.data(), data_.size()); }

double ComplexImage::norm() const { return norm_range(data_.data(), data_.size()); }

CoilStack::CoilStack(int coils, int h, int w) : coils_(coils), h_(h), w_(w) {
  if (coils < 1) throw DimensionError("coil count must be positive");
  check_sides(h, w);
  data_.assign(static_cast<std::size_t>(coils) * h * w, Cplx{0.0, 0.0});
}

CoilStack::CoilStack(int coils, int h, int w, std::vector<Cplx> data)
    : coils_(coils), h_(h), w_(w), data_(std::move(data)) {
  if (coils < 1) throw DimensionError("coil count must be positive");
  check_sides(h, w);
  if (data_.size() != static_cast<std::size_t>(coils) * h * w) {
    throw DimensionError("coil stack data length does not match shape");
  }
  if (!all_finite()) throw NumericError("coil stack contains non-finite entries");
}

bool CoilStack::all_finite() const { return finite_range(data_.data(), data_.size()); }

double CoilStack::norm() const { return norm_range(data_.data(), data_.size()); }

int SamplingMask::lines_acquired() const {
  int n = 0;
  for (const auto c : columns) n += (c != 0);
  return n;
}

int mask_center_start(int w, int n_center) { return w / 2 - n_center / 2; }

}  // namespace recon::mri
