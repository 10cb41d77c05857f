#pragma once

#include <filesystem>
#include <optional>

#include "rppg/pruning.hpp"
#include "rppg/tensor.hpp"

namespace rppg {

// Checkpoint container, little-endian:
//   magic "RPCK", version u8=1,
//   count u32, then `count` tensor records
//     (name length u16, name bytes, ndim u8, extents u32[], f64 data),
//   mask count u32 (0 when no mask), then mask records with the same layout
//     but u8 data of 0/1,
//   CRC32 (zlib polynomial) of every byte after the magic.
void save_checkpoint(const NamedTensors& entries, const SparsityMask* mask,
                     const std::filesystem::path& path);

struct Checkpoint {
  NamedTensors entries;
  std::optional<SparsityMask> mask;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rppg
