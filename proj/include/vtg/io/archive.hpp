#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vtg/core/tensor.hpp"

namespace vtg::io {

// Layout, all integers little-endian:
//   "VTCKPT\0\0" | u32 version | u32 meta_len | meta (canonical JSON) | u32 count
//   count x { u16 name_len | name | u8 dtype | u8 ndim | u64 dims[ndim] | u64 nbytes | data }
//   u32 crc32 of every preceding byte
enum class DType : uint8_t { f32 = 1, f64 = 2, i64 = 3 };

inline constexpr uint32_t kArchiveVersion = 1;

struct ArchiveEntry {
  DType dtype = DType::f32;
  Shape shape;
  std::vector<uint8_t> bytes;
};

class Archive {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);
  void put(const std::string& name, const std::vector<int64_t>& values);

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const std::map<std::string, ArchiveEntry>& entries() const { return entries_; }
  // Throws a load error when the entry is missing or the shape differs.
  Tensor<float> get_f32(const std::string& name, const Shape& expected = {}) const;
  Tensor<double> get_f64(const std::string& name) const;
  std::vector<int64_t> get_i64(const std::string& name) const;

  std::vector<uint8_t> serialize() const;
  static Archive parse(const std::vector<uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArchiveEntry> entries_;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace vtg::io
