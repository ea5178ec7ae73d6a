#pragma once

#include <cstdint>

#include "recon/mri_types.hpp"

namespace recon::data {

// Piecewise-smooth synthetic object: 5-15 randomly placed ellipses with
// distinct intensities, 2-5 thin line segments for high-frequency structure,
// a smooth low-order phase field. Magnitude is normalized so max |m| = 1.
mri::ComplexImage gen_phantom(int h, int w, std::uint64_t seed);

// Smooth complex coil profiles: Gaussian magnitude lobes centered on points
// spaced around the field of view, with a smooth per-coil phase ramp,
// pixelwise renormalized so sum_i |s_i|^2 = 1.
mri::SensitivityMaps gen_sensitivity_maps(int h, int w, int n_coils,
                                          std::uint64_t seed);

}  // namespace recon::data
