// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Named-array container used for weight checkpoints and hidden-cache spills.
//
// Layout (little-endian):
//   "ZSWT"  u32 version
//   repeated until EOF:
//     u16 name length, name bytes, u8 rank, u32 dims[rank], f32 data[prod(dims)]

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

inline constexpr char kCheckpointMagic[4] = {'Z', 'S', 'W', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape dims;
  std::vector<float> data;
};

NamedArray to_named_array(std::string name, const Tensor& tensor);
Tensor to_tensor(const NamedArray& array);

std::vector<char> encode_container(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_container(const std::vector<char>& bytes);

void write_container(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_container(const std::filesystem::path& path);

}  // namespace zerosmooth
