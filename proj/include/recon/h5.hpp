#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace recon::h5 {

// Thin RAII wrapper over the HDF5 C API. Paths are slash-separated
// ("train/000004/k_full"); intermediate groups are created on demand with
// object timestamps disabled, so regenerating a file with identical content
// yields identical bytes.
class File {
 public:
  static File create(const std::string& path);        // truncates
  static File open_readonly(const std::string& path);
  static File open_readwrite(const std::string& path);

  File(File&& other) noexcept;
  File& operator=(File&& other) noexcept;
  File(const File&) = delete;
  File& operator=(const File&) = delete;
  ~File();

  void flush();

  // Datasets. Write creates parent groups as needed and fails if the dataset
  // already exists; read returns the flattened array and (optionally) dims.
  void write_f32(const std::string& path, const float* data,
                 const std::vector<std::size_t>& dims);
  void write_f64(const std::string& path, const double* data,
                 const std::vector<std::size_t>& dims);
  void write_u8(const std::string& path, const std::uint8_t* data,
                const std::vector<std::size_t>& dims);
  std::vector<float> read_f32(const std::string& path,
                              std::vector<std::size_t>* dims = nullptr) const;
  std::vector<double> read_f64(const std::string& path,
                               std::vector<std::size_t>* dims = nullptr) const;
  std::vector<std::uint8_t> read_u8(
      const std::string& path, std::vector<std::size_t>* dims = nullptr) const;

  // Attributes, attached to the object at obj_path ("/" for the file root).
  void set_attr_u64(const std::string& obj_path, const std::string& name,
                    std::uint64_t value);
  void set_attr_i64(const std::string& obj_path, const std::string& name,
                    std::int64_t value);
  void set_attr_f64(const std::string& obj_path, const std::string& name,
                    double value);
  void set_attr_str(const std::string& obj_path, const std::string& name,
                    const std::string& value);
  std::uint64_t attr_u64(const std::string& obj_path,
                         const std::string& name) const;
  std::int64_t attr_i64(const std::string& obj_path,
                        const std::string& name) const;
  double attr_f64(const std::string& obj_path, const std::string& name) const;
  std::string attr_str(const std::string& obj_path,
                       const std::string& name) const;
  bool has_attr(const std::string& obj_path, const std::string& name) const;

  bool exists(const std::string& path) const;
  void ensure_group(const std::string& path);
  // Immediate children of a group, sorted by name.
  std::vector<std::string> children(const std::string& group_path) const;

 private:
  explicit File(std::int64_t id) : id_(id) {}
  std::int64_t id_ = -1;  // hid_t
};

}  // namespace recon::h5
