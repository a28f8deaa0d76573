// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Video container, little-endian:
//   "ZSVID\0"  u32 version = 1  u32 T, C, H, W  f32 payload[T*C*H*W]

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

inline constexpr char kVideoMagic[6] = {'Z', 'S', 'V', 'I', 'D', '\0'};
inline constexpr std::uint32_t kVideoVersion = 1;

std::vector<char> encode_video(const VideoLatent& video);
VideoLatent decode_video(const std::vector<char>& bytes);

void write_video(const std::filesystem::path& path, const VideoLatent& video);
VideoLatent read_video(const std::filesystem::path& path);

/// Writes one 8-bit image per frame into `directory` as
/// `<stem>_<frame>.pgm` (1 channel) or `.ppm` (3 channels); values are
/// clamped to [0, 1] and scaled to [0, 255]. Returns the written paths.
std::vector<std::filesystem::path> export_frames(const VideoLatent& video,
                                                 const std::filesystem::path& directory,
                                                 const std::string& stem);

}  // namespace zerosmooth
