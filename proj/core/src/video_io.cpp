// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/video_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderBytes = sizeof(kVideoMagic) + 5 * sizeof(std::uint32_t);

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

std::uint32_t get_u32(const std::vector<char>& bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, sizeof v);
  return v;
}

}  // namespace

std::vector<char> encode_video(const VideoLatent& video) {
  if (video.rank() != 4) throw DimensionError("video container needs a (T, C, H, W) tensor");
  for (std::size_t d : video.shape()) {
    if (d == 0 || d > std::numeric_limits<std::uint32_t>::max()) {
      throw DimensionError("video dimensions must be in [1, 2^32)");
    }
  }
  std::vector<char> out(kVideoMagic, kVideoMagic + sizeof(kVideoMagic));
  out.reserve(kHeaderBytes + 4 * video.size());
  put(out, kVideoVersion);
  for (std::size_t d : video.shape()) put(out, static_cast<std::uint32_t>(d));
  for (double v : video.values()) put(out, static_cast<float>(v));
  return out;
}

VideoLatent decode_video(const std::vector<char>& bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(kVideoMagic, kVideoMagic + sizeof(kVideoMagic), bytes.begin())) {
    throw FormatError("not a ZSVID container");
  }
  const std::uint32_t version = get_u32(bytes, sizeof(kVideoMagic));
  if (version != kVideoVersion) {
    throw FormatError("unsupported ZSVID version " + std::to_string(version));
  }
  Shape shape(4);
  std::size_t count = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    shape[i] = get_u32(bytes, sizeof(kVideoMagic) + 4 * (i + 1));
    if (shape[i] == 0) throw FormatError("ZSVID dimension is zero");
    count *= shape[i];
  }
  if (bytes.size() - kHeaderBytes != 4 * count) {
    throw FormatError("ZSVID payload length does not match its dimensions");
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + kHeaderBytes + 4 * i, sizeof f);
    data[i] = f;
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_video(const std::filesystem::path& path, const VideoLatent& video) {
  const std::vector<char> bytes = encode_video(video);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

VideoLatent read_video(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_video(bytes);
}

std::vector<std::filesystem::path> export_frames(const VideoLatent& video,
                                                 const std::filesystem::path& directory,
                                                 const std::string& stem) {
  if (video.rank() != 4) throw DimensionError("export_frames needs a (T, C, H, W) tensor");
  const std::size_t channels = video.dim(1), h = video.dim(2), w = video.dim(3);
  if (channels != 1 && channels != 3) {
    throw UnsupportedVariantError("frame export supports 1 or 3 channels, got " + std::to_string(channels));
  }
  std::filesystem::create_directories(directory);
  const std::size_t digits = std::to_string(video.frames() - 1).size();
  std::vector<std::filesystem::path> written;
  for (std::size_t f = 0; f < video.frames(); ++f) {
    std::string index = std::to_string(f);
    index.insert(0, digits - index.size(), '0');
    const auto path = directory / (stem + "_" + index + (channels == 1 ? ".pgm" : ".ppm"));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << (channels == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
    std::vector<char> pixels(channels * h * w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < channels; ++c) {
          const double v = std::clamp(video.at(f, c, y, x), 0.0, 1.0);
          pixels[(y * w + x) * channels + c] =
              static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
        }
      }
    }
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("failed writing " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace zerosmooth
