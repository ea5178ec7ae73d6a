#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/mri_types.hpp"

namespace recon::pngio {

// 8-bit grayscale PNG; pixels are row-major, length h*w.
void write_grayscale_png(const std::string& path,
                         const std::vector<std::uint8_t>& pixels, int h, int w);

// Magnitude panels side by side with thin white separators:
// fully-sampled | reconstruction | zero-fill | |reconstruction - reference|.
// All four panels share one intensity scale (the max magnitude over the first
// three), so brightness is comparable across panels.
void write_comparison_grid(const std::string& path,
                           const mri::ComplexImage& reference,
                           const mri::ComplexImage& recon,
                           const mri::ComplexImage& zero_fill);

}  // namespace recon::pngio
