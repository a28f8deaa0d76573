// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("container truncated");
  }

  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

NamedArray to_named_array(std::string name, const Tensor& tensor) {
  NamedArray out{std::move(name), tensor.shape(), std::vector<float>(tensor.size())};
  for (std::size_t i = 0; i < tensor.size(); ++i) out.data[i] = static_cast<float>(tensor[i]);
  return out;
}

Tensor to_tensor(const NamedArray& array) {
  return Tensor(array.dims, std::vector<double>(array.data.begin(), array.data.end()));
}

std::vector<char> encode_container(const std::vector<NamedArray>& arrays) {
  std::vector<char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const NamedArray& a : arrays) {
    if (a.name.size() > 0xFFFF) throw FormatError("array name too long: " + a.name.substr(0, 32));
    if (a.dims.size() > 0xFF) throw FormatError("array rank too large: " + a.name);
    if (shape_volume(a.dims) != a.data.size()) throw FormatError("array size mismatch: " + a.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dims.size()));
    for (std::size_t d : a.dims) {
      if (d > 0xFFFFFFFFu) throw FormatError("array dimension too large: " + a.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    const auto* p = reinterpret_cast<const char*>(a.data.data());
    out.insert(out.end(), p, p + a.data.size() * sizeof(float));
  }
  return out;
}

std::vector<NamedArray> decode_container(const std::vector<char>& bytes) {
  Reader in(bytes);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedArray> arrays;
  while (!in.done()) {
    NamedArray a;
    a.name.resize(in.get<std::uint16_t>());
    in.read(a.name.data(), a.name.size());
    const auto rank = in.get<std::uint8_t>();
    for (unsigned i = 0; i < rank; ++i) a.dims.push_back(in.get<std::uint32_t>());
    a.data.resize(shape_volume(a.dims));
    in.read(a.data.data(), a.data.size() * sizeof(float));
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void write_container(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  const std::vector<char> bytes = encode_container(arrays);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<NamedArray> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

}  // namespace zerosmooth
