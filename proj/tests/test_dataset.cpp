#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "recon/batches.hpp"
#include "recon/dataset.hpp"
#include "recon/errors.hpp"
#include "recon/h5.hpp"
#include "recon/mri_ops.hpp"
#include "recon/rng.hpp"
#include "test_support.hpp"

using namespace recon;
using namespace recon::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("recon_test_" + std::to_string(Rng(std::random_device{}()).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

DatasetManifest small_manifest(std::uint64_t seed = 7) {
  DatasetManifest m;
  m.n_train = 8;
  m.n_val = 2;
  m.n_test = 2;
  m.h = 32;
  m.w = 32;
  m.n_coils = 4;
  m.accel = 4.0;
  m.n_center = 4;
  m.density_exponent = 1.0;
  m.seed = seed;
  return m;
}

double sample_rel_err(const KSpaceSample& a, const KSpaceSample& b) {
  double worst = 0.0;
  worst = std::max(worst, testsup::max_abs_diff(a.k_full.data(), b.k_full.data(),
                                                a.k_full.size()));
  worst = std::max(
      worst, testsup::max_abs_diff(a.maps.data(), b.maps.data(), a.maps.size()));
  worst = std::max(
      worst, testsup::max_abs_diff(a.m_f.data(), b.m_f.data(), a.m_f.size()));
  worst = std::max(
      worst, testsup::max_abs_diff(a.m_z.data(), b.m_z.data(), a.m_z.size()));
  return worst;
}

}  // namespace

TEST_CASE("h5 round trip preserves arrays and attributes") {
  TempDir tmp;
  const std::string path = tmp.file("scratch.h5");
  {
    h5::File f = h5::File::create(path);
    std::vector<float> xs = {1.5f, -2.0f, 3.25f, 0.0f};
    f.write_f32("a/b/data", xs.data(), {2, 2});
    std::vector<std::uint8_t> m = {1, 0, 1};
    f.write_u8("a/mask", m.data(), {3});
    std::vector<double> d = {1.0 / 3.0, 2.5e-17};
    f.write_f64("deep/values", d.data(), {2});
    f.set_attr_i64("/", "count", -12);
    f.set_attr_u64("a", "seed", 99);
    f.set_attr_f64("a/b", "scale", 0.125);
    f.set_attr_str("/", "note", "hello");
  }
  h5::File f = h5::File::open_readonly(path);
  std::vector<std::size_t> dims;
  auto xs = f.read_f32("a/b/data", &dims);
  CHECK(dims == std::vector<std::size_t>{2, 2});
  CHECK(xs == std::vector<float>{1.5f, -2.0f, 3.25f, 0.0f});
  CHECK(f.read_u8("a/mask") == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(f.read_f64("deep/values")[0] == 1.0 / 3.0);
  CHECK(f.attr_i64("/", "count") == -12);
  CHECK(f.attr_u64("a", "seed") == 99);
  CHECK(f.attr_f64("a/b", "scale") == 0.125);
  CHECK(f.attr_str("/", "note") == "hello");
  CHECK(f.exists("a/b/data"));
  CHECK(!f.exists("a/b/missing"));
  CHECK(f.children("a") == std::vector<std::string>{"b", "mask"});
}

TEST_CASE("build_dataset writes the manifest-mandated layout") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);

  DatasetReader reader(path);
  CHECK(reader.manifest().n_train == 8);
  CHECK(reader.split_count("train") == 8);
  CHECK(reader.split_count("val") == 2);
  CHECK(reader.split_count("test") == 2);
  CHECK_THROWS_AS(reader.split_count("bogus"), NotFoundError);
  CHECK_THROWS_AS(reader.load("train", 8), NotFoundError);

  // Ids are unique across the whole container.
  std::set<std::string> ids;
  for (const std::string& split : {"train", "val", "test"})
    for (const auto& id : reader.split_ids(split)) ids.insert(id);
  CHECK(ids.size() == 12);
}

TEST_CASE("stored samples round-trip bit-identically") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);
  RawSlice a = reader.load_raw("train", 3);
  RawSlice b = reader.load_raw("train", 3);
  CHECK(testsup::max_abs_diff(a.k_full.data(), b.k_full.data(),
                              a.k_full.size()) == 0.0);
  CHECK(testsup::max_abs_diff(a.maps.data(), b.maps.data(), a.maps.size()) ==
        0.0);
  CHECK(a.mask.columns == b.mask.columns);
}

TEST_CASE("samples obey the physics invariants after storage") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);
  for (int i = 0; i < reader.split_count("train"); ++i) {
    KSpaceSample s = reader.load("train", i);
    // m_z is the zero-filled recon of the masked k-space.
    mri::ComplexImage mz = mri::zero_fill(s.undersampled(), s.maps);
    CHECK(testsup::rel_image_err(mz, s.m_z) < 1e-6);
    // m_f is the adjoint of the full k-space.
    mri::ComplexImage mf = mri::adjoint_recon(s.k_full, s.maps);
    CHECK(testsup::rel_image_err(mf, s.m_f) < 1e-6);
    // Coil maps survived float32 storage close to normalized.
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        double ssq = 0.0;
        for (int coil = 0; coil < 4; ++coil) ssq += std::norm(s.maps.at(coil, r, c));
        CHECK(std::abs(ssq - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("regenerating with the same manifest reproduces the checksum") {
  TempDir tmp;
  const std::string p1 = tmp.file("one.h5");
  const std::string p2 = tmp.file("two.h5");
  build_dataset(small_manifest(123), p1);
  build_dataset(small_manifest(123), p2);
  CHECK(dataset_checksum(p1) == dataset_checksum(p2));

  const std::string p3 = tmp.file("three.h5");
  build_dataset(small_manifest(124), p3);
  CHECK(dataset_checksum(p1) != dataset_checksum(p3));
}

TEST_CASE("invalid manifests are rejected and leave no file behind") {
  TempDir tmp;
  const std::string path = tmp.file("bad.h5");
  DatasetManifest m = small_manifest();
  m.n_val = 0;
  CHECK_THROWS_AS(build_dataset(m, path), ConfigError);
  CHECK(!fs::exists(path));

  m = small_manifest();
  m.accel = 32.0;  // line budget smaller than the center block
  m.n_center = 12;
  CHECK_THROWS_AS(build_dataset(m, path), ConfigError);
  CHECK(!fs::exists(path));
}

TEST_CASE("batch stream without augmentation is a clean permutation") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);

  BatchConfig cfg;
  cfg.split = "train";
  cfg.batch_size = 3;
  cfg.shuffle_seed = 5;
  BatchStream stream(reader, cfg);
  CHECK(stream.samples_per_epoch() == 8);
  CHECK(stream.batches_per_epoch() == 3);

  std::vector<std::string> seen;
  std::vector<KSpaceSample> batch;
  while (stream.next(batch))
    for (const auto& s : batch) seen.push_back(s.id);
  CHECK(seen.size() == 8);
  std::set<std::string> uniq(seen.begin(), seen.end());
  CHECK(uniq.size() == 8);
  // Shuffled: not simply the sorted id order.
  std::vector<std::string> sorted = seen;
  std::sort(sorted.begin(), sorted.end());
  CHECK(seen != sorted);

  // Same seed and epoch reproduce the same order; the next epoch differs.
  stream.start_epoch(0);
  std::vector<std::string> again;
  while (stream.next(batch))
    for (const auto& s : batch) again.push_back(s.id);
  CHECK(again == seen);
  stream.start_epoch(1);
  std::vector<std::string> second;
  while (stream.next(batch))
    for (const auto& s : batch) second.push_back(s.id);
  CHECK(second != seen);
}

TEST_CASE("identity augmentation leaves the sample unchanged") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);
  KSpaceSample plain = finish_slice(reader.load_raw("train", 0));
  KSpaceSample same = augment_slice(reader.load_raw("train", 0), false, 0.0);
  CHECK(sample_rel_err(plain, same) < 1e-6);
}

TEST_CASE("rotation angles stay inside the 20-degree bound") {
  // Mirror of the stream's own draw: flip coin, then angle.
  for (std::uint64_t pos = 0; pos < 10000; ++pos) {
    Rng rng(derive_seed(9, "aug", 0, pos));
    (void)rng.uniform();
    double angle = rng.uniform(-20.0, 20.0);
    CHECK(angle >= -20.0);
    CHECK(angle <= 20.0);
  }
}

TEST_CASE("augmented batches still satisfy the physics invariant") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);

  BatchConfig cfg;
  cfg.split = "train";
  cfg.batch_size = 4;
  cfg.shuffle_seed = 11;
  cfg.augment = true;
  BatchStream stream(reader, cfg);
  std::vector<KSpaceSample> batch;
  int n_checked = 0;
  while (stream.next(batch)) {
    for (const auto& s : batch) {
      mri::ComplexImage mz = mri::zero_fill(s.undersampled(), s.maps);
      CHECK(testsup::rel_image_err(mz, s.m_z) < 1e-6);
      mri::ComplexImage mf = mri::adjoint_recon(s.k_full, s.maps);
      CHECK(testsup::rel_image_err(mf, s.m_f) < 1e-6);
      CHECK(s.m_f.all_finite());
      ++n_checked;
    }
  }
  CHECK(n_checked == 8);
}

TEST_CASE("augmented streams are reproducible and actually augment") {
  TempDir tmp;
  const std::string path = tmp.file("set.h5");
  build_dataset(small_manifest(), path);
  DatasetReader reader(path);

  BatchConfig cfg;
  cfg.split = "train";
  cfg.batch_size = 2;
  cfg.shuffle_seed = 3;
  cfg.augment = true;

  auto collect = [&](int workers) {
    BatchConfig c = cfg;
    c.n_workers = workers;
    BatchStream stream(reader, c);
    std::vector<KSpaceSample> all, batch;
    while (stream.next(batch))
      for (auto& s : batch) all.push_back(std::move(s));
    return all;
  };

  auto a = collect(1);
  auto b = collect(1);
  auto c = collect(3);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(sample_rel_err(a[i], b[i]) == 0.0);
    // Worker count must not change the data, only who computes it.
    CHECK(sample_rel_err(a[i], c[i]) == 0.0);
  }

  // At least one sample in the epoch was genuinely transformed.
  BatchConfig plain_cfg = cfg;
  plain_cfg.augment = false;
  BatchStream plain_stream(reader, plain_cfg);
  std::vector<KSpaceSample> plain, batch;
  while (plain_stream.next(batch))
    for (auto& s : batch) plain.push_back(std::move(s));
  double biggest = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    biggest = std::max(biggest, sample_rel_err(a[i], plain[i]));
  CHECK(biggest > 1e-3);
}

TEST_CASE("rotation helper: identity, bound behavior, finite support") {
  Rng rng(17);
  mri::ComplexImage img = testsup::rand_image(32, 32, rng);

  mri::ComplexImage same = rotate_bilinear(img, 0.0);
  CHECK(testsup::max_abs_diff(same.data(), img.data(), img.size()) == 0.0);

  mri::ComplexImage flipped = flip_horizontal(flip_horizontal(img));
  CHECK(testsup::max_abs_diff(flipped.data(), img.data(), img.size()) == 0.0);

  // A centered radially symmetric blob is invariant under rotation.
  mri::ComplexImage blob(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      double d2 = (r - 15.5) * (r - 15.5) + (c - 15.5) * (c - 15.5);
      blob.at(r, c) = mri::Cplx{std::exp(-d2 / 50.0), 0.0};
    }
  }
  mri::ComplexImage turned = rotate_bilinear(blob, 17.0);
  CHECK(testsup::max_abs_diff(turned.data(), blob.data(), blob.size()) < 0.02);
}
