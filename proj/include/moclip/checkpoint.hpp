#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "moclip/errors.hpp"
#include "moclip/tensor.hpp"

namespace moclip {

inline constexpr char kCheckpointMagic[4] = {'M', 'O', 'C', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Binary container: magic, version, config blob, tensor table, trailing CRC-32.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  const StoredTensor& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw FormatError("checkpoint has no tensor named '" + name + "'");
  }

  void add(const std::string& name, const Shape& shape, std::span<const double> values) {
    StoredTensor t;
    t.name = name;
    for (auto d : shape) t.dims.push_back(static_cast<std::uint32_t>(d));
    t.values.assign(values.begin(), values.end());
    tensors.push_back(std::move(t));
  }
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  std::vector<unsigned char>& buffer() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) {
      throw CorruptionError("checkpoint truncated at offset " + std::to_string(pos_) + " while reading " + what +
                            " (need " + std::to_string(n) + " bytes, " + std::to_string(size_ - pos_) + " left)");
    }
  }
  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, data, static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.uint<std::uint32_t>(ckpt.version);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ckpt.config.size()));
  w.bytes(ckpt.config.data(), ckpt.config.size());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name.substr(0, 32) + "...");
    if (t.dims.size() > 0xFF) throw FormatError("tensor '" + t.name + "' has too many axes");
    if (t.values.size() != t.count()) throw DimensionError("tensor '" + t.name + "' value count does not match dims");
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.uint<std::uint32_t>(d);
    for (double v : t.values) {
      if (t.dtype == DType::f64) {
        w.f64(v);
      } else {
        w.f32(static_cast<float>(v));
      }
    }
  }
  const std::uint32_t crc = detail::crc32_of(w.buffer().data(), w.buffer().size());
  w.uint<std::uint32_t>(crc);
  return std::move(w.buffer());
}

inline Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size());
  const std::string magic = r.string(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.version = r.uint<std::uint32_t>("version");
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto config_len = r.uint<std::uint32_t>("config length");
  ckpt.config = r.string(config_len, "config");
  const auto count = r.uint<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = r.uint<std::uint16_t>("tensor name length");
    t.name = r.string(name_len, "tensor name");
    const auto dtype = r.uint<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("tensor '" + t.name + "' has unknown dtype code " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.uint<std::uint8_t>("rank");
    for (std::uint8_t k = 0; k < rank; ++k) t.dims.push_back(r.uint<std::uint32_t>("dims"));
    const std::size_t n = t.count();
    const std::size_t width = t.dtype == DType::f64 ? 8 : 4;
    r.need(n * width, "tensor values");
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      t.values[k] = t.dtype == DType::f64 ? std::bit_cast<double>(r.uint<std::uint64_t>("value"))
                                          : static_cast<double>(std::bit_cast<float>(r.uint<std::uint32_t>("value")));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  const std::size_t body = r.offset();
  const auto stored = r.uint<std::uint32_t>("crc");
  if (r.offset() != bytes.size()) {
    throw CorruptionError("checkpoint has " + std::to_string(bytes.size() - r.offset()) + " trailing bytes at offset " +
                          std::to_string(r.offset()));
  }
  const auto actual = detail::crc32_of(bytes.data(), body);
  if (stored != actual) throw CorruptionError("checkpoint CRC mismatch at offset " + std::to_string(body));
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint to " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ConfigError("failed writing checkpoint to " + path);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file_bytes(path)); }

}  // namespace moclip
