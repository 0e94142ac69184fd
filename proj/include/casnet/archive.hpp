// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Named-tensor container shared by weight manifests and golden fixtures.
//
//   "CASW"                      4 bytes magic
//   version                     u32 (= 1)
//   meta_len, meta              u32 + UTF-8 JSON (config echo, notes)
//   count                       u32
//   count x { name_len u16, name, ndim u8, dims u32[ndim], float32 payload }
//   digest                      u32 CRC-32 of every preceding byte
//
// All integers and floats little-endian, payloads row-major.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "casnet/error.hpp"

namespace casnet {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline std::string shape_to_string(std::span<const std::uint32_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

class TensorArchive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void set(const std::string& name, std::vector<std::uint32_t> shape, std::vector<float> data) {
    NamedTensor t{std::move(shape), std::move(data)};
    CASNET_CHECK(t.numel() == t.data.size(), ShapeError, "tensor '" + name + "' payload does not match its shape");
    tensors_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const NamedTensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ShapeError("missing tensor '" + name + "'");
    return it->second;
  }

  /// Data of `name`, checked against the expected shape.
  std::span<const float> get(const std::string& name, std::span<const std::uint32_t> expected) const {
    const auto& t = at(name);
    if (!std::equal(t.shape.begin(), t.shape.end(), expected.begin(), expected.end()))
      throw ShapeError("tensor '" + name + "' has shape " + shape_to_string(t.shape) + ", expected " +
                       shape_to_string(expected));
    return t.data;
  }

  std::span<const float> get(const std::string& name, std::initializer_list<std::uint32_t> expected) const {
    return get(name, std::span<const std::uint32_t>(expected.begin(), expected.size()));
  }

  const std::map<std::string, NamedTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.data.size();
    return n;
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> b;
    auto put = [&](std::uint64_t v, int n) {
      for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    b.insert(b.end(), {'C', 'A', 'S', 'W'});
    put(kArchiveVersion, 4);
    const std::string m = meta.dump();
    put(m.size(), 4);
    b.insert(b.end(), m.begin(), m.end());
    put(tensors_.size(), 4);
    for (const auto& [name, t] : tensors_) {
      put(name.size(), 2);
      b.insert(b.end(), name.begin(), name.end());
      put(t.shape.size(), 1);
      for (auto d : t.shape) put(d, 4);
      for (float v : t.data) put(std::bit_cast<std::uint32_t>(v), 4);
    }
    put(digest_of(b), 4);
    return b;
  }

  static TensorArchive from_bytes(std::span<const std::uint8_t> b) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > b.size()) throw FormatError("truncated tensor archive");
    };
    auto get = [&](int n) {
      need(static_cast<std::size_t>(n));
      std::uint64_t v = 0;
      for (int i = 0; i < n; ++i) v |= std::uint64_t{b[pos + i]} << (8 * i);
      pos += static_cast<std::size_t>(n);
      return v;
    };
    need(4);
    if (std::memcmp(b.data(), "CASW", 4) != 0) throw FormatError("bad tensor archive magic");
    pos = 4;
    const auto version = get(4);
    if (version != kArchiveVersion) throw FormatError("unsupported tensor archive version " + std::to_string(version));
    CASNET_CHECK(b.size() >= 4, FormatError, "truncated tensor archive");
    const std::uint32_t stored = static_cast<std::uint32_t>(b[b.size() - 4] | b[b.size() - 3] << 8 |
                                                            b[b.size() - 2] << 16 | std::uint32_t{b[b.size() - 1]} << 24);
    if (digest_of(b.first(b.size() - 4)) != stored) throw FormatError("tensor archive digest mismatch");

    TensorArchive a;
    const auto mlen = get(4);
    need(mlen);
    try {
      a.meta = nlohmann::json::parse(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                     b.begin() + static_cast<std::ptrdiff_t>(pos + mlen));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad archive metadata: ") + e.what());
    }
    pos += mlen;
    const auto count = get(4);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto nlen = get(2);
      need(nlen);
      std::string name(reinterpret_cast<const char*>(b.data() + pos), nlen);
      pos += nlen;
      const auto ndim = get(1);
      NamedTensor t;
      for (std::uint64_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<std::uint32_t>(get(4)));
      t.data.resize(t.numel());
      need(4 * t.data.size());
      for (auto& v : t.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
      a.tensors_[name] = std::move(t);
    }
    if (pos != b.size() - 4) throw FormatError("trailing bytes in tensor archive");
    return a;
  }

  void save(const std::string& path) const {
    const auto bytes = to_bytes();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      return from_bytes(buf);
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
  }

  /// Digest over the serialized form; identifies a parameter set.
  std::uint32_t digest() const {
    const auto bytes = to_bytes();
    return static_cast<std::uint32_t>(bytes[bytes.size() - 4] | bytes[bytes.size() - 3] << 8 |
                                      bytes[bytes.size() - 2] << 16 | std::uint32_t{bytes[bytes.size() - 1]} << 24);
  }

 private:
  static std::uint32_t digest_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
  }

  std::map<std::string, NamedTensor> tensors_;
};

}  // namespace casnet
