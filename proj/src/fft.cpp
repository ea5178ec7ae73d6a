#include "recon/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace recon::fft {

namespace {

// Plans are cached per (h, w, sign). Planning is serialized (FFTW requires
// it); fftw_execute_dft on distinct buffers is thread safe. FFTW_ESTIMATE
// keeps plan selection independent of runtime measurements, so results are
// reproducible run to run.
class PlanCache {
 public:
  fftw_plan get(int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    const Key key{h, w, sign};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<fftw_complex> dummy(static_cast<std::size_t>(h) * w);
    fftw_plan p = fftw_plan_dft_2d(h, w, dummy.data(), dummy.data(), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

 private:
  using Key = std::tuple<int, int, int>;
  std::mutex mu_;
  std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

struct Scratch {
  std::vector<mri::Cplx> in, out;
};

Scratch& scratch(std::size_t n) {
  thread_local Scratch s;
  if (s.in.size() < n) {
    s.in.resize(n);
    s.out.resize(n);
  }
  return s;
}

// For even sides fftshift and ifftshift are the same index permutation.
inline std::size_t shifted_index(int r, int c, int h, int w) {
  const int rs = (r + h / 2) % h;
  const int cs = (c + w / 2) % w;
  return static_cast<std::size_t>(rs) * w + cs;
}

void transform(const mri::Cplx* in, mri::Cplx* out, int h, int w, int sign) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Scratch& s = scratch(n);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      s.in[static_cast<std::size_t>(r) * w + c] = in[shifted_index(r, c, h, w)];
    }
  }
  fftw_plan p = cache().get(h, w, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(s.in.data()),
                   reinterpret_cast<fftw_complex*>(s.out.data()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out[shifted_index(r, c, h, w)] = s.out[static_cast<std::size_t>(r) * w + c] * scale;
    }
  }
}

}  // namespace

void forward_centered(const mri::Cplx* in, mri::Cplx* out, int h, int w) {
  transform(in, out, h, w, FFTW_FORWARD);
}

void inverse_centered(const mri::Cplx* in, mri::Cplx* out, int h, int w) {
  transform(in, out, h, w, FFTW_BACKWARD);
}

mri::ComplexImage forward(const mri::ComplexImage& img) {
  mri::ComplexImage out(img.height(), img.width());
  forward_centered(img.data(), out.data(), img.height(), img.width());
  return out;
}

mri::ComplexImage inverse(const mri::ComplexImage& img) {
  mri::ComplexImage out(img.height(), img.width());
  inverse_centered(img.data(), out.data(), img.height(), img.width());
  return out;
}

}  // namespace recon::fft
