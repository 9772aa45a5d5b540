#pragma once

#include <filesystem>

#include "topseg/tensor.hpp"

namespace topseg::numkit {

// Binary checkpoint, layout (all integers little-endian):
//   "TSG1" | u32 tensor count | per tensor:
//   u16 name length | name bytes | u8 rank (always 2) |
//   u32 rows | u32 cols | rows*cols f32 payload, row-major.
// Tensors are written in name order, so save(load(f)) reproduces f
// byte for byte.
void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace topseg::numkit
