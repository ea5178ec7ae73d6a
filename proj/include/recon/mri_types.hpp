#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace recon::mri {

using Cplx = std::complex<double>;

// Complex 2D image, row-major. Sides must be even and >= 8 so the centered
// FFT convention is well defined.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(int h, int w);                             // zero-filled
  ComplexImage(int h, int w, std::vector<Cplx> data);     // validates finiteness

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }

  Cplx& at(int r, int c) { return data_[static_cast<std::size_t>(r) * w_ + c]; }
  const Cplx& at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * w_ + c];
  }
  Cplx* data() { return data_.data(); }
  const Cplx* data() const { return data_.data(); }

  bool all_finite() const;
  double norm() const;  // Frobenius norm over complex entries

 private:
  int h_ = 0, w_ = 0;
  std::vector<Cplx> data_;
};

// Per-coil stack of complex 2D arrays (N_coils x H x W). Used both for
// k-space data and for coil-weighted image stacks.
class CoilStack {
 public:
  CoilStack() = default;
  CoilStack(int coils, int h, int w);
  CoilStack(int coils, int h, int w, std::vector<Cplx> data);

  int coils() const { return coils_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }

  Cplx* coil(int i) { return data_.data() + static_cast<std::size_t>(i) * h_ * w_; }
  const Cplx* coil(int i) const {
    return data_.data() + static_cast<std::size_t>(i) * h_ * w_;
  }
  Cplx& at(int i, int r, int c) {
    return data_[(static_cast<std::size_t>(i) * h_ + r) * w_ + c];
  }
  const Cplx& at(int i, int r, int c) const {
    return data_[(static_cast<std::size_t>(i) * h_ + r) * w_ + c];
  }
  Cplx* data() { return data_.data(); }
  const Cplx* data() const { return data_.data(); }

  bool all_finite() const;
  double norm() const;

 private:
  int coils_ = 0, h_ = 0, w_ = 0;
  std::vector<Cplx> data_;
};

using CoilKSpace = CoilStack;
using SensitivityMaps = CoilStack;

// Cartesian 1D-in-2D undersampling pattern: a binary column vector broadcast
// along rows. The central n_center columns are always acquired.
struct SamplingMask {
  std::vector<std::uint8_t> columns;  // length W, 1 = phase-encode line acquired
  double accel = 1.0;                 // target acceleration factor R
  int n_center = 0;
  std::uint64_t seed = 0;

  int width() const { return static_cast<int>(columns.size()); }
  int lines_acquired() const;
  bool column_acquired(int c) const { return columns[static_cast<std::size_t>(c)] != 0; }
};

// First column index of the fully sampled central block for width w.
int mask_center_start(int w, int n_center);

}  // namespace recon::mri
