#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "recon/mri_types.hpp"

namespace recon::data {

struct DatasetManifest {
  int n_train = 8;
  int n_val = 2;
  int n_test = 2;
  int h = 64;
  int w = 64;
  int n_coils = 4;
  double accel = 4.0;
  int n_center = 8;
  double density_exponent = 1.0;
  std::uint64_t seed = 0;
  int format_version = 1;
};

// One training example: fully sampled multi-coil k-space with its coil maps
// and sampling mask, plus the two derived images every consumer needs.
struct KSpaceSample {
  mri::CoilKSpace k_full;
  mri::SensitivityMaps maps;
  mri::SamplingMask mask;
  mri::ComplexImage m_f;  // reference image, adjoint of the full k-space
  mri::ComplexImage m_z;  // zero-filled recon of the undersampled k-space
  std::string id;

  mri::CoilKSpace undersampled() const;  // mask (*) k_full
};

// Generates manifest-many samples and persists them under /train, /val,
// /test. Fails atomically: on error the partial file is removed.
void build_dataset(const DatasetManifest& manifest, const std::string& out_path);

// Raw stored fields of one sample, before image-domain post-processing.
struct RawSlice {
  mri::CoilKSpace k_full;
  mri::SensitivityMaps maps;
  mri::SamplingMask mask;
  std::string id;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  ~DatasetReader();
  DatasetReader(DatasetReader&&) noexcept;
  DatasetReader& operator=(DatasetReader&&) noexcept;

  const DatasetManifest& manifest() const { return manifest_; }
  int split_count(const std::string& split) const;
  const std::vector<std::string>& split_ids(const std::string& split) const;

  RawSlice load_raw(const std::string& split, int index) const;
  // load_raw plus recomputation of m_f and m_z.
  KSpaceSample load(const std::string& split, int index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  DatasetManifest manifest_;
};

// Turns a raw slice into a full sample: recomputes the reference and
// zero-filled images from the stored arrays.
KSpaceSample finish_slice(RawSlice raw);

// Logical content checksum: hash over every dataset's bytes and the manifest
// attributes, independent of HDF5 file-layout details.
std::uint64_t dataset_checksum(const std::string& path);

}  // namespace recon::data
