#include "recon/batches.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <numeric>
#include <utility>

#include "recon/errors.hpp"
#include "recon/mri_ops.hpp"
#include "recon/rng.hpp"

namespace recon::data {

namespace {

mri::SamplingMask full_mask(int w) {
  mri::SamplingMask m;
  m.columns.assign(static_cast<std::size_t>(w), 1);
  m.accel = 1.0;
  m.n_center = w;
  m.seed = 0;
  return m;
}

}  // namespace

mri::ComplexImage rotate_bilinear(const mri::ComplexImage& img, double deg) {
  const int h = img.height(), w = img.width();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double rad = deg * std::numbers::pi / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  mri::ComplexImage out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // Inverse mapping: where in the source does this output pixel live?
      const double dy = r - cy, dx = c - cx;
      const double sy = ca * dy + sa * dx + cy;
      const double sx = -sa * dy + ca * dx + cx;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const int r0 = static_cast<int>(fy), c0 = static_cast<int>(fx);
      const double wy = sy - fy, wx = sx - fx;
      mri::Cplx acc{0.0, 0.0};
      for (int di = 0; di < 2; ++di) {
        for (int dj = 0; dj < 2; ++dj) {
          const int rr = r0 + di, cc = c0 + dj;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const double weight = (di ? wy : 1.0 - wy) * (dj ? wx : 1.0 - wx);
          if (weight != 0.0) acc += weight * img.at(rr, cc);
        }
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

mri::ComplexImage flip_horizontal(const mri::ComplexImage& img) {
  const int h = img.height(), w = img.width();
  mri::ComplexImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(r, w - 1 - c);
  return out;
}

KSpaceSample augment_slice(RawSlice raw, bool flip, double angle_deg) {
  mri::ComplexImage m = mri::adjoint_recon(raw.k_full, raw.maps);
  if (flip) m = flip_horizontal(m);
  if (angle_deg != 0.0) m = rotate_bilinear(m, angle_deg);
  raw.k_full = mri::forward_model(m, raw.maps, full_mask(m.width()));
  return finish_slice(std::move(raw));
}

BatchStream::BatchStream(const DatasetReader& reader, BatchConfig cfg)
    : reader_(&reader), cfg_(std::move(cfg)) {
  if (cfg_.batch_size < 1)
    throw ConfigError("batch_size must be >= 1", "training.batch_size");
  if (cfg_.n_workers < 1) cfg_.n_workers = 1;
  n_samples_ = reader_->split_count(cfg_.split);
  start_epoch(0);
}

void BatchStream::start_epoch(std::uint64_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  order_.resize(static_cast<std::size_t>(n_samples_));
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(derive_seed(cfg_.shuffle_seed, "perm", epoch));
  rng.shuffle(order_);
}

int BatchStream::batches_per_epoch() const {
  return (n_samples_ + cfg_.batch_size - 1) / cfg_.batch_size;
}

bool BatchStream::next(std::vector<KSpaceSample>& out) {
  out.clear();
  if (cursor_ >= n_samples_) return false;
  const int take = std::min(cfg_.batch_size, n_samples_ - cursor_);

  // HDF5 access stays on this thread; only the FFT-heavy post-processing of
  // each slice fans out to workers.
  std::vector<RawSlice> raws;
  raws.reserve(static_cast<std::size_t>(take));
  std::vector<std::pair<bool, double>> aug(static_cast<std::size_t>(take),
                                           {false, 0.0});
  for (int i = 0; i < take; ++i) {
    raws.push_back(reader_->load_raw(cfg_.split, order_[cursor_ + i]));
    if (cfg_.augment) {
      Rng rng(derive_seed(cfg_.shuffle_seed, "aug", epoch_,
                          static_cast<std::uint64_t>(cursor_ + i)));
      aug[static_cast<std::size_t>(i)] = {rng.uniform() < 0.5,
                                          rng.uniform(-20.0, 20.0)};
    }
  }

  auto finish_one = [&](int i) {
    auto& [flip, angle] = aug[static_cast<std::size_t>(i)];
    if (cfg_.augment)
      return augment_slice(std::move(raws[static_cast<std::size_t>(i)]), flip,
                           angle);
    return finish_slice(std::move(raws[static_cast<std::size_t>(i)]));
  };

  if (cfg_.n_workers > 1 && take > 1) {
    std::vector<std::future<KSpaceSample>> futs;
    futs.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i)
      futs.push_back(std::async(std::launch::async, finish_one, i));
    for (auto& fu : futs) out.push_back(fu.get());
  } else {
    for (int i = 0; i < take; ++i) out.push_back(finish_one(i));
  }

  cursor_ += take;
  return true;
}

}  // namespace recon::data
