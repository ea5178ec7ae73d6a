#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/dataset.hpp"

namespace recon::data {

// Rotates a complex image by `deg` degrees counterclockwise about its
// geometric center, bilinearly interpolating the real and imaginary planes
// identically. Pixels mapped from outside the field of view become zero.
// deg == 0 reproduces the input exactly.
mri::ComplexImage rotate_bilinear(const mri::ComplexImage& img, double deg);

mri::ComplexImage flip_horizontal(const mri::ComplexImage& img);

// Applies the given geometric transform to the underlying image of a raw
// slice and rebuilds its k-space through the forward model, so the emitted
// sample stays consistent with the acquisition physics.
KSpaceSample augment_slice(RawSlice raw, bool flip, double angle_deg);

struct BatchConfig {
  std::string split = "train";
  int batch_size = 4;
  std::uint64_t shuffle_seed = 0;
  bool augment = false;
  int n_workers = 1;
};

// One epoch = one shuffled pass over the split; every sample appears exactly
// once. Augmentation randomness depends only on (shuffle_seed, epoch,
// position in epoch), so streams are reproducible and resumable at epoch
// granularity regardless of worker count.
class BatchStream {
 public:
  BatchStream(const DatasetReader& reader, BatchConfig cfg);

  void start_epoch(std::uint64_t epoch);
  // Fills `out` with the next batch (possibly short at epoch end). Returns
  // false when the epoch is exhausted.
  bool next(std::vector<KSpaceSample>& out);

  int samples_per_epoch() const { return n_samples_; }
  int batches_per_epoch() const;

 private:
  const DatasetReader* reader_;
  BatchConfig cfg_;
  int n_samples_ = 0;
  std::uint64_t epoch_ = 0;
  std::vector<int> order_;
  int cursor_ = 0;
};

}  // namespace recon::data
