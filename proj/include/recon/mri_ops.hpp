#pragma once

#include <cstdint>

#include "recon/mri_types.hpp"

namespace recon::mri {

// Per-coil shading: output[i] = s_i (*) m (Hadamard product).
CoilStack coil_expand(const ComplexImage& m, const SensitivityMaps& maps);

// Acquisition model: output[i] = M (*) F(s_i (*) m), centered unitary FFT.
CoilKSpace forward_model(const ComplexImage& m, const SensitivityMaps& maps,
                         const SamplingMask& mask);

// Coil combination: sum_i conj(s_i) (*) F^-1(k_i). Linear in k.
ComplexImage adjoint_recon(const CoilKSpace& k, const SensitivityMaps& maps);

// Zero-filled reconstruction of already-masked k-space.
ComplexImage zero_fill(const CoilKSpace& k_u, const SensitivityMaps& maps);

// Elementwise mask product, broadcast over coils and rows. Idempotent.
CoilKSpace apply_mask(const CoilKSpace& k, const SamplingMask& mask);

// Variable-density Cartesian mask: exactly round(w / accel) columns acquired,
// the central n_center always included, the rest drawn without replacement
// with probability proportional to (1 - |x|)^density_exponent where x is the
// column's normalized distance from center. Deterministic per seed.
SamplingMask make_mask(int w, double accel, int n_center,
                       double density_exponent, std::uint64_t seed);

}  // namespace recon::mri
