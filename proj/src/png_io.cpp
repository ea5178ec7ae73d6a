#include "recon/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <png.h>

#include "recon/errors.hpp"

namespace recon::pngio {

namespace {

struct FileCloser {
  std::FILE* fp;
  ~FileCloser() {
    if (fp != nullptr) std::fclose(fp);
  }
};

std::uint8_t to_byte(double magnitude, double scale) {
  double v = std::round(255.0 * magnitude * scale);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

void write_grayscale_png(const std::string& path,
                         const std::vector<std::uint8_t>& pixels, int h,
                         int w) {
  if (h < 1 || w < 1 ||
      pixels.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w)) {
    throw DimensionError("png pixel buffer does not match " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  FileCloser file{std::fopen(path.c_str(), "wb")};
  if (file.fp == nullptr) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path + "'");
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < h; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() +
                                             static_cast<std::size_t>(r) * w));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_comparison_grid(const std::string& path,
                           const mri::ComplexImage& reference,
                           const mri::ComplexImage& recon,
                           const mri::ComplexImage& zero_fill) {
  const int h = reference.height();
  const int w = reference.width();
  if (recon.height() != h || recon.width() != w || zero_fill.height() != h ||
      zero_fill.width() != w) {
    throw DimensionError("comparison grid panels must share one shape");
  }

  double peak = 0.0;
  for (const mri::ComplexImage* img : {&reference, &recon, &zero_fill}) {
    for (std::size_t i = 0; i < img->size(); ++i) {
      peak = std::max(peak, std::abs(img->data()[i]));
    }
  }
  const double scale = peak > 0.0 ? 1.0 / peak : 1.0;

  constexpr int kSep = 2;
  const int grid_w = 4 * w + 3 * kSep;
  std::vector<std::uint8_t> pixels(
      static_cast<std::size_t>(h) * grid_w, 255);  // separators stay white
  for (int r = 0; r < h; ++r) {
    std::uint8_t* row = pixels.data() + static_cast<std::size_t>(r) * grid_w;
    for (int c = 0; c < w; ++c) {
      const mri::Cplx diff = recon.at(r, c) - reference.at(r, c);
      row[c] = to_byte(std::abs(reference.at(r, c)), scale);
      row[w + kSep + c] = to_byte(std::abs(recon.at(r, c)), scale);
      row[2 * (w + kSep) + c] = to_byte(std::abs(zero_fill.at(r, c)), scale);
      row[3 * (w + kSep) + c] = to_byte(std::abs(diff), scale);
    }
  }
  write_grayscale_png(path, pixels, h, grid_w);
}

}  // namespace recon::pngio
