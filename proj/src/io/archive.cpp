#include "vtg/io/archive.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace vtg::io {
namespace {

constexpr char kMagic[8] = {'V', 'T', 'C', 'K', 'P', 'T', '\0', '\0'};

size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64:
    case DType::i64: return 8;
  }
  fail(ErrorCode::load, "unknown tensor dtype " + std::to_string(static_cast<int>(d)));
}

template <typename T>
void append(std::vector<uint8_t>& out, T v) {
  uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<uint8_t>& b, size_t end) : bytes_(b), end_(end) {}
  template <typename T>
  T take() {
    T v;
    std::memcpy(&v, raw(sizeof(T)), sizeof(T));
    return v;
  }
  const uint8_t* raw(size_t n) {
    if (n > end_ - pos_) fail(ErrorCode::load, "truncated checkpoint archive");
    const uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }

 private:
  const std::vector<uint8_t>& bytes_;
  size_t end_;
  size_t pos_ = 0;
};

template <typename T>
ArchiveEntry make_entry(DType d, const Shape& shape, const T* data, size_t count) {
  ArchiveEntry e{d, shape, std::vector<uint8_t>(count * sizeof(T))};
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  return e;
}

}  // namespace

void Archive::put(const std::string& name, const Tensor<float>& t) {
  entries_[name] = make_entry(DType::f32, t.shape(), t.data(), static_cast<size_t>(t.numel()));
}
void Archive::put(const std::string& name, const Tensor<double>& t) {
  entries_[name] = make_entry(DType::f64, t.shape(), t.data(), static_cast<size_t>(t.numel()));
}
void Archive::put(const std::string& name, const std::vector<int64_t>& values) {
  entries_[name] = make_entry(DType::i64, {static_cast<int64_t>(values.size())}, values.data(), values.size());
}

namespace {
const ArchiveEntry& find(const std::map<std::string, ArchiveEntry>& m, const std::string& name, DType d) {
  auto it = m.find(name);
  if (it == m.end()) fail(ErrorCode::load, "checkpoint has no tensor '" + name + "'");
  if (it->second.dtype != d) fail(ErrorCode::load, "tensor '" + name + "' has unexpected dtype");
  return it->second;
}
}  // namespace

Tensor<float> Archive::get_f32(const std::string& name, const Shape& expected) const {
  const auto& e = find(entries_, name, DType::f32);
  if (!expected.empty() && e.shape != expected)
    fail(ErrorCode::load, "tensor '" + name + "' has shape " + shape_string(e.shape) + ", expected " +
                              shape_string(expected));
  Tensor<float> t(e.shape);
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

Tensor<double> Archive::get_f64(const std::string& name) const {
  const auto& e = find(entries_, name, DType::f64);
  Tensor<double> t(e.shape);
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

std::vector<int64_t> Archive::get_i64(const std::string& name) const {
  const auto& e = find(entries_, name, DType::i64);
  std::vector<int64_t> v(e.bytes.size() / 8);
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

std::vector<uint8_t> Archive::serialize() const {
  std::vector<uint8_t> out(kMagic, kMagic + 8);
  append<uint32_t>(out, kArchiveVersion);
  const std::string meta = metadata.dump();
  append<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  append<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    append<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    append<uint8_t>(out, static_cast<uint8_t>(e.shape.size()));
    for (auto d : e.shape) append<uint64_t>(out, static_cast<uint64_t>(d));
    append<uint64_t>(out, e.bytes.size());
    out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  }
  append<uint32_t>(out, static_cast<uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size()))));
  return out;
}

Archive Archive::parse(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 4 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    fail(ErrorCode::load, "not a checkpoint archive");
  const size_t body = bytes.size() - 4;
  uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != static_cast<uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body))))
    fail(ErrorCode::load, "checkpoint checksum mismatch");

  Reader r(bytes, body);
  r.raw(8);
  const auto version = r.take<uint32_t>();
  if (version != kArchiveVersion) fail(ErrorCode::load, "unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = r.take<uint32_t>();
  const auto* meta = reinterpret_cast<const char*>(r.raw(meta_len));
  Archive a;
  try {
    a.metadata = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::load, std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto count = r.take<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.take<uint16_t>();
    const auto* name = reinterpret_cast<const char*>(r.raw(name_len));
    ArchiveEntry e;
    e.dtype = static_cast<DType>(r.take<uint8_t>());
    const auto ndim = r.take<uint8_t>();
    for (int d = 0; d < ndim; ++d) e.shape.push_back(static_cast<int64_t>(r.take<uint64_t>()));
    const auto nbytes = r.take<uint64_t>();
    if (nbytes != static_cast<uint64_t>(shape_numel(e.shape)) * dtype_size(e.dtype))
      fail(ErrorCode::load, "tensor '" + std::string(name, name_len) + "' size does not match its shape");
    const auto* data = r.raw(nbytes);
    e.bytes.assign(data, data + nbytes);
    a.entries_[std::string(name, name_len)] = std::move(e);
  }
  if (r.pos() != body) fail(ErrorCode::load, "trailing bytes in checkpoint archive");
  return a;
}

void Archive::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Archive Archive::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::load, "checkpoint not found: " + path.string());
  return parse(read_file(path));
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::load, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

}  // namespace vtg::io
