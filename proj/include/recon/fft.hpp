#pragma once

#include "recon/mri_types.hpp"

namespace recon::fft {

// Orthonormal 2D DFT with the DC component at array center (fftshift on both
// sides, 1/sqrt(H*W) scaling in each direction). Sides must be even, which
// makes fftshift and ifftshift coincide.
void forward_centered(const mri::Cplx* in, mri::Cplx* out, int h, int w);
void inverse_centered(const mri::Cplx* in, mri::Cplx* out, int h, int w);

mri::ComplexImage forward(const mri::ComplexImage& img);
mri::ComplexImage inverse(const mri::ComplexImage& img);

}  // namespace recon::fft
