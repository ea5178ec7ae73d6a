#include "recon/h5.hpp"

#include <hdf5.h>

#include <cstring>
#include <mutex>

#include "recon/errors.hpp"

namespace recon::h5 {

namespace {

void init_library() {
  static std::once_flag once;
  // Suppress the library's own stderr traces; errors surface as exceptions.
  std::call_once(once, [] { H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr); });
}

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw IoError("hdf5: " + what + " failed for '" + path + "'");
}

// Scoped hid_t closer.
struct Id {
  hid_t h = -1;
  herr_t (*closer)(hid_t) = nullptr;
  Id(hid_t h_, herr_t (*closer_)(hid_t)) : h(h_), closer(closer_) {}
  Id(const Id&) = delete;
  Id& operator=(const Id&) = delete;
  ~Id() {
    if (h >= 0 && closer) closer(h);
  }
  explicit operator bool() const { return h >= 0; }
};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : path) {
    if (ch == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

hid_t notime_plist(hid_t cls) {
  hid_t p = H5Pcreate(cls);
  if (p >= 0) H5Pset_obj_track_times(p, 0);
  return p;
}

// Creates missing groups along the path, timestamps disabled.
void make_groups(hid_t file, const std::vector<std::string>& parts) {
  std::string sofar;
  for (const auto& part : parts) {
    sofar += "/" + part;
    htri_t there = H5Lexists(file, sofar.c_str(), H5P_DEFAULT);
    if (there < 0) fail("link query", sofar);
    if (there == 0) {
      Id gcpl{notime_plist(H5P_GROUP_CREATE), H5Pclose};
      Id g{H5Gcreate2(file, sofar.c_str(), H5P_DEFAULT, gcpl.h, H5P_DEFAULT),
           H5Gclose};
      if (!g) fail("group create", sofar);
    }
  }
}

void write_raw(hid_t file, const std::string& path, hid_t file_type,
               hid_t mem_type, const void* data,
               const std::vector<std::size_t>& dims) {
  auto parts = split_path(path);
  if (parts.empty()) fail("empty dataset path", path);
  parts.pop_back();
  make_groups(file, parts);

  std::vector<hsize_t> hd(dims.begin(), dims.end());
  Id space{H5Screate_simple(static_cast<int>(hd.size()), hd.data(), nullptr),
           H5Sclose};
  if (!space) fail("dataspace create", path);
  Id dcpl{notime_plist(H5P_DATASET_CREATE), H5Pclose};
  Id dset{H5Dcreate2(file, path.c_str(), file_type, space.h, H5P_DEFAULT,
                     dcpl.h, H5P_DEFAULT),
          H5Dclose};
  if (!dset) fail("dataset create", path);
  if (H5Dwrite(dset.h, mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data) < 0)
    fail("dataset write", path);
}

std::vector<std::size_t> read_dims(hid_t dset, const std::string& path) {
  Id space{H5Dget_space(dset), H5Sclose};
  if (!space) fail("get dataspace", path);
  int rank = H5Sget_simple_extent_ndims(space.h);
  if (rank < 0) fail("get rank", path);
  std::vector<hsize_t> hd(static_cast<std::size_t>(rank));
  H5Sget_simple_extent_dims(space.h, hd.data(), nullptr);
  return {hd.begin(), hd.end()};
}

template <typename T>
std::vector<T> read_raw(hid_t file, const std::string& path, hid_t mem_type,
                        std::vector<std::size_t>* dims_out) {
  Id dset{H5Dopen2(file, path.c_str(), H5P_DEFAULT), H5Dclose};
  if (!dset) fail("dataset open", path);
  auto dims = read_dims(dset.h, path);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  std::vector<T> buf(n);
  if (H5Dread(dset.h, mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data()) < 0)
    fail("dataset read", path);
  if (dims_out) *dims_out = dims;
  return buf;
}

void set_scalar_attr(hid_t file, const std::string& obj, const std::string& name,
                     hid_t file_type, hid_t mem_type, const void* value) {
  Id o{H5Oopen(file, obj.c_str(), H5P_DEFAULT), H5Oclose};
  if (!o) fail("object open", obj);
  if (H5Aexists(o.h, name.c_str()) > 0) {
    if (H5Adelete(o.h, name.c_str()) < 0) fail("attr replace", obj + "@" + name);
  }
  Id space{H5Screate(H5S_SCALAR), H5Sclose};
  Id attr{H5Acreate2(o.h, name.c_str(), file_type, space.h, H5P_DEFAULT,
                     H5P_DEFAULT),
          H5Aclose};
  if (!attr) fail("attr create", obj + "@" + name);
  if (H5Awrite(attr.h, mem_type, value) < 0) fail("attr write", obj + "@" + name);
}

template <typename T>
T get_scalar_attr(hid_t file, const std::string& obj, const std::string& name,
                  hid_t mem_type) {
  Id attr{H5Aopen_by_name(file, obj.c_str(), name.c_str(), H5P_DEFAULT,
                          H5P_DEFAULT),
          H5Aclose};
  if (!attr) throw NotFoundError("hdf5: attribute '" + name + "' not found on '" +
                                 obj + "'");
  T value{};
  if (H5Aread(attr.h, mem_type, &value) < 0) fail("attr read", obj + "@" + name);
  return value;
}

herr_t collect_name(hid_t, const char* name, const H5L_info_t*, void* op_data) {
  static_cast<std::vector<std::string>*>(op_data)->emplace_back(name);
  return 0;
}

}  // namespace

File File::create(const std::string& path) {
  init_library();
  Id fcpl{notime_plist(H5P_FILE_CREATE), H5Pclose};
  hid_t id = H5Fcreate(path.c_str(), H5F_ACC_TRUNC, fcpl.h, H5P_DEFAULT);
  if (id < 0) fail("create", path);
  return File(id);
}

File File::open_readonly(const std::string& path) {
  init_library();
  hid_t id = H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
  if (id < 0) fail("open (read-only)", path);
  return File(id);
}

File File::open_readwrite(const std::string& path) {
  init_library();
  hid_t id = H5Fopen(path.c_str(), H5F_ACC_RDWR, H5P_DEFAULT);
  if (id < 0) fail("open (read-write)", path);
  return File(id);
}

File::File(File&& other) noexcept : id_(other.id_) { other.id_ = -1; }

File& File::operator=(File&& other) noexcept {
  if (this != &other) {
    if (id_ >= 0) H5Fclose(id_);
    id_ = other.id_;
    other.id_ = -1;
  }
  return *this;
}

File::~File() {
  if (id_ >= 0) H5Fclose(id_);
}

void File::flush() {
  if (H5Fflush(id_, H5F_SCOPE_GLOBAL) < 0) fail("flush", "<file>");
}

void File::write_f32(const std::string& path, const float* data,
                     const std::vector<std::size_t>& dims) {
  write_raw(id_, path, H5T_IEEE_F32LE, H5T_NATIVE_FLOAT, data, dims);
}

void File::write_f64(const std::string& path, const double* data,
                     const std::vector<std::size_t>& dims) {
  write_raw(id_, path, H5T_IEEE_F64LE, H5T_NATIVE_DOUBLE, data, dims);
}

void File::write_u8(const std::string& path, const std::uint8_t* data,
                    const std::vector<std::size_t>& dims) {
  write_raw(id_, path, H5T_STD_U8LE, H5T_NATIVE_UINT8, data, dims);
}

std::vector<float> File::read_f32(const std::string& path,
                                  std::vector<std::size_t>* dims) const {
  return read_raw<float>(id_, path, H5T_NATIVE_FLOAT, dims);
}

std::vector<double> File::read_f64(const std::string& path,
                                   std::vector<std::size_t>* dims) const {
  return read_raw<double>(id_, path, H5T_NATIVE_DOUBLE, dims);
}

std::vector<std::uint8_t> File::read_u8(const std::string& path,
                                        std::vector<std::size_t>* dims) const {
  return read_raw<std::uint8_t>(id_, path, H5T_NATIVE_UINT8, dims);
}

void File::set_attr_u64(const std::string& obj, const std::string& name,
                        std::uint64_t value) {
  set_scalar_attr(id_, obj, name, H5T_STD_U64LE, H5T_NATIVE_UINT64, &value);
}

void File::set_attr_i64(const std::string& obj, const std::string& name,
                        std::int64_t value) {
  set_scalar_attr(id_, obj, name, H5T_STD_I64LE, H5T_NATIVE_INT64, &value);
}

void File::set_attr_f64(const std::string& obj, const std::string& name,
                        double value) {
  set_scalar_attr(id_, obj, name, H5T_IEEE_F64LE, H5T_NATIVE_DOUBLE, &value);
}

void File::set_attr_str(const std::string& obj, const std::string& name,
                        const std::string& value) {
  Id type{H5Tcopy(H5T_C_S1), H5Tclose};
  H5Tset_size(type.h, value.size() + 1);
  H5Tset_strpad(type.h, H5T_STR_NULLTERM);
  set_scalar_attr(id_, obj, name, type.h, type.h, value.c_str());
}

std::uint64_t File::attr_u64(const std::string& obj,
                             const std::string& name) const {
  return get_scalar_attr<std::uint64_t>(id_, obj, name, H5T_NATIVE_UINT64);
}

std::int64_t File::attr_i64(const std::string& obj,
                            const std::string& name) const {
  return get_scalar_attr<std::int64_t>(id_, obj, name, H5T_NATIVE_INT64);
}

double File::attr_f64(const std::string& obj, const std::string& name) const {
  return get_scalar_attr<double>(id_, obj, name, H5T_NATIVE_DOUBLE);
}

std::string File::attr_str(const std::string& obj,
                           const std::string& name) const {
  Id attr{H5Aopen_by_name(id_, obj.c_str(), name.c_str(), H5P_DEFAULT,
                          H5P_DEFAULT),
          H5Aclose};
  if (!attr) throw NotFoundError("hdf5: attribute '" + name + "' not found on '" +
                                 obj + "'");
  Id type{H5Aget_type(attr.h), H5Tclose};
  std::size_t len = H5Tget_size(type.h);
  std::vector<char> buf(len + 1, '\0');
  Id mem{H5Tcopy(H5T_C_S1), H5Tclose};
  H5Tset_size(mem.h, len);
  if (H5Aread(attr.h, mem.h, buf.data()) < 0) fail("attr read", obj + "@" + name);
  return std::string(buf.data());
}

bool File::has_attr(const std::string& obj, const std::string& name) const {
  htri_t r = H5Aexists_by_name(id_, obj.c_str(), name.c_str(), H5P_DEFAULT);
  if (r < 0) fail("attr query", obj + "@" + name);
  return r > 0;
}

bool File::exists(const std::string& path) const {
  auto parts = split_path(path);
  std::string sofar;
  for (const auto& part : parts) {
    sofar += "/" + part;
    htri_t r = H5Lexists(id_, sofar.c_str(), H5P_DEFAULT);
    if (r < 0) fail("link query", sofar);
    if (r == 0) return false;
  }
  return true;
}

void File::ensure_group(const std::string& path) {
  make_groups(id_, split_path(path));
}

std::vector<std::string> File::children(const std::string& group_path) const {
  Id g{H5Gopen2(id_, group_path.empty() ? "/" : group_path.c_str(), H5P_DEFAULT),
       H5Gclose};
  if (!g) fail("group open", group_path);
  std::vector<std::string> names;
  hsize_t idx = 0;
  if (H5Literate(g.h, H5_INDEX_NAME, H5_ITER_INC, &idx, collect_name, &names) < 0)
    fail("group iterate", group_path);
  return names;
}

}  // namespace recon::h5
