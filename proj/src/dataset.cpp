#include "recon/dataset.hpp"

#include <cstdio>
#include <map>
#include <utility>

#include "recon/errors.hpp"
#include "recon/h5.hpp"
#include "recon/mri_ops.hpp"
#include "recon/phantom.hpp"
#include "recon/rng.hpp"

namespace recon::data {

namespace {

constexpr const char* kSplits[] = {"train", "val", "test"};

std::string sample_name(int global_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", global_index);
  return buf;
}

std::vector<float> to_interleaved(const mri::Cplx* src, std::size_t n) {
  std::vector<float> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = static_cast<float>(src[i].real());
    out[2 * i + 1] = static_cast<float>(src[i].imag());
  }
  return out;
}

void from_interleaved(const std::vector<float>& src, mri::Cplx* dst,
                      std::size_t n) {
  if (src.size() != 2 * n)
    throw DimensionError("complex dataset has unexpected element count");
  for (std::size_t i = 0; i < n; ++i)
    dst[i] = mri::Cplx{static_cast<double>(src[2 * i]),
                       static_cast<double>(src[2 * i + 1])};
}

void validate(const DatasetManifest& m) {
  if (m.n_train < 1 || m.n_val < 1 || m.n_test < 1)
    throw ConfigError("all split counts must be positive", "dataset.n_train");
  if (m.h < 32 || m.w < 32 || m.h % 2 || m.w % 2)
    throw ConfigError("image sides must be even and >= 32", "dataset.h");
  if (m.n_coils < 1) throw ConfigError("n_coils must be >= 1", "dataset.n_coils");
  if (m.accel < 1.0)
    throw ConfigError("acceleration must be >= 1", "dataset.accel");
  if (m.n_center < 0 || m.n_center > m.w)
    throw ConfigError("n_center out of range", "dataset.n_center");
}

mri::SamplingMask full_mask(int w) {
  mri::SamplingMask m;
  m.columns.assign(static_cast<std::size_t>(w), 1);
  m.accel = 1.0;
  m.n_center = w;
  m.seed = 0;
  return m;
}

void write_manifest(h5::File& f, const DatasetManifest& m) {
  f.set_attr_i64("/", "n_train", m.n_train);
  f.set_attr_i64("/", "n_val", m.n_val);
  f.set_attr_i64("/", "n_test", m.n_test);
  f.set_attr_i64("/", "h", m.h);
  f.set_attr_i64("/", "w", m.w);
  f.set_attr_i64("/", "n_coils", m.n_coils);
  f.set_attr_f64("/", "accel", m.accel);
  f.set_attr_i64("/", "n_center", m.n_center);
  f.set_attr_f64("/", "density_exponent", m.density_exponent);
  f.set_attr_u64("/", "seed", m.seed);
  f.set_attr_i64("/", "format_version", m.format_version);
}

DatasetManifest read_manifest(const h5::File& f) {
  DatasetManifest m;
  m.n_train = static_cast<int>(f.attr_i64("/", "n_train"));
  m.n_val = static_cast<int>(f.attr_i64("/", "n_val"));
  m.n_test = static_cast<int>(f.attr_i64("/", "n_test"));
  m.h = static_cast<int>(f.attr_i64("/", "h"));
  m.w = static_cast<int>(f.attr_i64("/", "w"));
  m.n_coils = static_cast<int>(f.attr_i64("/", "n_coils"));
  m.accel = f.attr_f64("/", "accel");
  m.n_center = static_cast<int>(f.attr_i64("/", "n_center"));
  m.density_exponent = f.attr_f64("/", "density_exponent");
  m.seed = f.attr_u64("/", "seed");
  m.format_version = static_cast<int>(f.attr_i64("/", "format_version"));
  return m;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

mri::CoilKSpace KSpaceSample::undersampled() const {
  return mri::apply_mask(k_full, mask);
}

void build_dataset(const DatasetManifest& manifest, const std::string& out_path) {
  validate(manifest);
  try {
    h5::File f = h5::File::create(out_path);
    write_manifest(f, manifest);

    const int counts[] = {manifest.n_train, manifest.n_val, manifest.n_test};
    const std::size_t px =
        static_cast<std::size_t>(manifest.h) * manifest.w;
    int global = 0;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < counts[s]; ++i, ++global) {
        mri::ComplexImage m = gen_phantom(
            manifest.h, manifest.w,
            derive_seed(manifest.seed, "phantom", global));
        mri::SensitivityMaps maps = gen_sensitivity_maps(
            manifest.h, manifest.w, manifest.n_coils,
            derive_seed(manifest.seed, "maps", global));
        std::uint64_t mask_seed = derive_seed(manifest.seed, "mask", global);
        mri::SamplingMask mask =
            mri::make_mask(manifest.w, manifest.accel, manifest.n_center,
                           manifest.density_exponent, mask_seed);
        mri::CoilKSpace k_full =
            mri::forward_model(m, maps, full_mask(manifest.w));

        const std::string base =
            std::string(kSplits[s]) + "/" + sample_name(global);
        const std::size_t nc = static_cast<std::size_t>(manifest.n_coils);
        f.write_f32(base + "/k_full",
                    to_interleaved(k_full.data(), nc * px).data(),
                    {nc, static_cast<std::size_t>(manifest.h),
                     static_cast<std::size_t>(manifest.w), 2});
        f.write_f32(base + "/maps", to_interleaved(maps.data(), nc * px).data(),
                    {nc, static_cast<std::size_t>(manifest.h),
                     static_cast<std::size_t>(manifest.w), 2});
        f.write_u8(base + "/mask", mask.columns.data(),
                   {static_cast<std::size_t>(manifest.w)});
        f.set_attr_u64(base, "mask_seed", mask_seed);
      }
    }
  } catch (...) {
    std::remove(out_path.c_str());  // do not leave a partial container behind
    throw;
  }
}

struct DatasetReader::Impl {
  h5::File file;
  std::map<std::string, std::vector<std::string>> ids;
};

DatasetReader::DatasetReader(const std::string& path)
    : impl_(new Impl{h5::File::open_readonly(path), {}}) {
  manifest_ = read_manifest(impl_->file);
  for (const char* split : kSplits) {
    if (impl_->file.exists(split))
      impl_->ids[split] = impl_->file.children(split);
  }
  const std::size_t want[] = {static_cast<std::size_t>(manifest_.n_train),
                              static_cast<std::size_t>(manifest_.n_val),
                              static_cast<std::size_t>(manifest_.n_test)};
  for (int s = 0; s < 3; ++s) {
    auto it = impl_->ids.find(kSplits[s]);
    std::size_t got = it == impl_->ids.end() ? 0 : it->second.size();
    if (got != want[s])
      throw IoError(std::string("dataset split '") + kSplits[s] +
                    "' holds " + std::to_string(got) + " samples, manifest says " +
                    std::to_string(want[s]));
  }
}

DatasetReader::~DatasetReader() = default;
DatasetReader::DatasetReader(DatasetReader&&) noexcept = default;
DatasetReader& DatasetReader::operator=(DatasetReader&&) noexcept = default;

const std::vector<std::string>& DatasetReader::split_ids(
    const std::string& split) const {
  auto it = impl_->ids.find(split);
  if (it == impl_->ids.end())
    throw NotFoundError("dataset has no split '" + split + "'");
  return it->second;
}

int DatasetReader::split_count(const std::string& split) const {
  return static_cast<int>(split_ids(split).size());
}

RawSlice DatasetReader::load_raw(const std::string& split, int index) const {
  const auto& ids = split_ids(split);
  if (index < 0 || index >= static_cast<int>(ids.size()))
    throw NotFoundError("sample index " + std::to_string(index) +
                        " out of range for split '" + split + "'");
  const std::string base = split + "/" + ids[index];
  const int h = manifest_.h, w = manifest_.w, nc = manifest_.n_coils;
  const std::size_t px = static_cast<std::size_t>(h) * w;

  mri::CoilKSpace k_full(nc, h, w);
  from_interleaved(impl_->file.read_f32(base + "/k_full"), k_full.data(),
                   static_cast<std::size_t>(nc) * px);
  mri::SensitivityMaps maps(nc, h, w);
  from_interleaved(impl_->file.read_f32(base + "/maps"), maps.data(),
                   static_cast<std::size_t>(nc) * px);

  mri::SamplingMask mask;
  mask.columns = impl_->file.read_u8(base + "/mask");
  if (mask.columns.size() != static_cast<std::size_t>(w))
    throw DimensionError("stored mask has wrong width");
  mask.accel = manifest_.accel;
  mask.n_center = manifest_.n_center;
  mask.seed = impl_->file.attr_u64(base, "mask_seed");

  return RawSlice{std::move(k_full), std::move(maps), std::move(mask),
                  ids[index]};
}

KSpaceSample finish_slice(RawSlice raw) {
  mri::ComplexImage m_f = mri::adjoint_recon(raw.k_full, raw.maps);
  mri::CoilKSpace k_u = mri::apply_mask(raw.k_full, raw.mask);
  mri::ComplexImage m_z = mri::zero_fill(k_u, raw.maps);
  return KSpaceSample{std::move(raw.k_full), std::move(raw.maps),
                      std::move(raw.mask),  std::move(m_f),
                      std::move(m_z),       std::move(raw.id)};
}

KSpaceSample DatasetReader::load(const std::string& split, int index) const {
  return finish_slice(load_raw(split, index));
}

std::uint64_t dataset_checksum(const std::string& path) {
  h5::File f = h5::File::open_readonly(path);
  DatasetManifest m = read_manifest(f);
  std::uint64_t h = 1469598103934665603ULL;  // FNV offset basis
  h = fnv1a(h, &m.n_train, sizeof m.n_train);
  h = fnv1a(h, &m.n_val, sizeof m.n_val);
  h = fnv1a(h, &m.n_test, sizeof m.n_test);
  h = fnv1a(h, &m.h, sizeof m.h);
  h = fnv1a(h, &m.w, sizeof m.w);
  h = fnv1a(h, &m.n_coils, sizeof m.n_coils);
  h = fnv1a(h, &m.accel, sizeof m.accel);
  h = fnv1a(h, &m.n_center, sizeof m.n_center);
  h = fnv1a(h, &m.density_exponent, sizeof m.density_exponent);
  h = fnv1a(h, &m.seed, sizeof m.seed);
  for (const char* split : kSplits) {
    if (!f.exists(split)) continue;
    for (const std::string& id : f.children(split)) {
      const std::string base = std::string(split) + "/" + id;
      h = fnv1a(h, base.data(), base.size());
      auto k = f.read_f32(base + "/k_full");
      h = fnv1a(h, k.data(), k.size() * sizeof(float));
      auto s = f.read_f32(base + "/maps");
      h = fnv1a(h, s.data(), s.size() * sizeof(float));
      auto mk = f.read_u8(base + "/mask");
      h = fnv1a(h, mk.data(), mk.size());
    }
  }
  return h;
}

}  // namespace recon::data
