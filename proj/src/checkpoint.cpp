#include "rppg/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "rppg/errors.hpp"

namespace rppg {

namespace {

constexpr char kMagic[4] = {'R', 'P', 'C', 'K'};
constexpr uint8_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_record(std::string& out, const std::string& name, const Tensor& tensor,
                bool as_u8) {
  if (name.size() > 0xffff) throw ContractError("layer name too long: " + name);
  put_u16(out, static_cast<uint16_t>(name.size()));
  out.append(name);
  const Shape& shape = tensor.shape();
  if (shape.size() > 0xff) throw ContractError("tensor rank too large for " + name);
  out.push_back(static_cast<char>(shape.size()));
  for (int64_t ext : shape) put_u32(out, static_cast<uint32_t>(ext));
  for (int64_t i = 0; i < tensor.numel(); ++i) {
    if (as_u8) {
      out.push_back(tensor[i] != 0.0 ? char{1} : char{0});
    } else {
      put_u64(out, std::bit_cast<uint64_t>(tensor[i]));
    }
  }
}

class Reader {
 public:
  Reader(const unsigned char* data, size_t size, std::string path)
      : data_(data), size_(size), path_(std::move(path)) {}

  const unsigned char* take(size_t n) {
    if (pos_ + n > size_) {
      throw IoError("truncated checkpoint " + path_ + " at byte offset " +
                    std::to_string(pos_));
    }
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  uint16_t u16() {
    const unsigned char* p = take(2);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }

  uint32_t u32() {
    const unsigned char* p = take(4);
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }

  uint64_t u64() {
    uint64_t v = 0;
    const unsigned char* p = take(8);
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  std::pair<std::string, Tensor> record(bool as_u8) {
    const uint16_t name_len = u16();
    const unsigned char* name_bytes = take(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const uint8_t ndim = *take(1);
    Shape shape(ndim);
    for (uint8_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(u32());
    const int64_t n = shape_numel(shape);
    std::vector<double> values(static_cast<size_t>(n));
    if (as_u8) {
      const unsigned char* p = take(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        if (p[i] > 1) throw FormatError("mask value " + std::to_string(p[i]) + " is not 0/1");
        values[static_cast<size_t>(i)] = p[i];
      }
    } else {
      for (int64_t i = 0; i < n; ++i) {
        values[static_cast<size_t>(i)] = std::bit_cast<double>(u64());
      }
    }
    return {std::move(name), Tensor::from_data(std::move(shape), std::move(values))};
  }

  size_t pos() const { return pos_; }

 private:
  const unsigned char* data_;
  size_t size_;
  size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void save_checkpoint(const NamedTensors& entries, const SparsityMask* mask,
                     const std::filesystem::path& path) {
  std::string body;
  body.push_back(static_cast<char>(kVersion));
  put_u32(body, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) put_record(body, name, tensor, /*as_u8=*/false);
  put_u32(body, mask ? static_cast<uint32_t>(mask->entries.size()) : 0);
  if (mask) {
    for (const auto& [name, tensor] : mask->entries) put_record(body, name, tensor, true);
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  std::string tail;
  put_u32(tail, crc);
  out.write(tail.data(), 4);
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 1 + 4 + 4 + 4) {
    throw FormatError("checkpoint " + path.string() + " is too short");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic in " + path.string());
  }
  const size_t body_size = bytes.size() - 4 - 4;
  const uint32_t stored_crc =
      static_cast<uint32_t>(bytes[bytes.size() - 4]) |
      (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
      (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
      (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
  const uint32_t computed_crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + 4), static_cast<uInt>(body_size)));
  if (stored_crc != computed_crc) {
    throw FormatError("checkpoint checksum mismatch in " + path.string());
  }

  Reader reader(bytes.data() + 4, body_size, path.string());
  const uint8_t version = *reader.take(1);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const uint32_t count = reader.u32();
  for (uint32_t i = 0; i < count; ++i) ckpt.entries.push_back(reader.record(false));
  const uint32_t mask_count = reader.u32();
  if (mask_count > 0) {
    SparsityMask mask;
    for (uint32_t i = 0; i < mask_count; ++i) mask.entries.push_back(reader.record(true));
    const int64_t kept = mask.kept_count();
    mask.compression_ratio =
        kept > 0 ? static_cast<double>(mask.total_count()) / static_cast<double>(kept) : 1.0;
    ckpt.mask = std::move(mask);
  }
  if (reader.pos() != body_size) {
    throw FormatError("trailing bytes in checkpoint " + path.string());
  }
  return ckpt;
}

}  // namespace rppg
