// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "casnet/dsp.hpp"
#include "casnet/error.hpp"

namespace casnet {

enum class SampleFormat { Pcm16, Float32 };

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16le(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

inline void put_u32le(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16le(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Reads a mono 16-bit PCM or float32 WAV. Other rates are linearly
/// resampled to `target_fs` unless `allow_resample` is false, in which case
/// a rate mismatch is an error.
inline Waveform read_wav(const std::string& path, double target_fs = 16000.0, bool allow_resample = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return FormatError(path + ": " + why); };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t fmt_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    std::uint32_t len = detail::read_u32le(chunk + 4);
    std::size_t body = pos + 8;
    if (body + len > buf.size()) len = static_cast<std::uint32_t>(buf.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw fail("truncated fmt chunk");
      fmt_tag = detail::read_u16le(buf.data() + body);
      channels = detail::read_u16le(buf.data() + body + 2);
      rate = detail::read_u32le(buf.data() + body + 4);
      bits = detail::read_u16le(buf.data() + body + 14);
      if (fmt_tag == 0xFFFE && len >= 26) fmt_tag = detail::read_u16le(buf.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (channels == 0 || data == nullptr) throw fail("missing fmt or data chunk");
  if (channels != 1) throw fail("only mono WAV files are supported (got " + std::to_string(channels) + " channels)");

  Waveform w;
  w.fs = rate;
  if (fmt_tag == 1 && bits == 16) {
    w.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = static_cast<std::int16_t>(detail::read_u16le(data + 2 * i)) / 32768.0;
  } else if (fmt_tag == 3 && bits == 32) {
    w.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = std::bit_cast<float>(detail::read_u32le(data + 4 * i));
  } else {
    throw fail("unsupported sample format (need 16-bit PCM or float32)");
  }

  if (w.fs != target_fs) {
    if (!allow_resample)
      throw fail("sample rate " + std::to_string(rate) + " Hz differs from " +
                 std::to_string(static_cast<long>(target_fs)) + " Hz and resampling is disabled");
    w = resample_linear(w, target_fs);
  }
  return w;
}

inline void write_wav(const std::string& path, const Waveform& w, SampleFormat fmt = SampleFormat::Float32) {
  const std::uint16_t bits = fmt == SampleFormat::Pcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> b;
  b.reserve(44 + n * block);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(b, 36 + n * block);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32le(b, 16);
  detail::put_u16le(b, fmt == SampleFormat::Pcm16 ? 1 : 3);
  detail::put_u16le(b, 1);
  const auto rate = static_cast<std::uint32_t>(std::lround(w.fs));
  detail::put_u32le(b, rate);
  detail::put_u32le(b, rate * block);
  detail::put_u16le(b, block);
  detail::put_u16le(b, bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(b, n * block);
  for (double s : w.samples) {
    if (fmt == SampleFormat::Pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      detail::put_u16le(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      detail::put_u32le(b, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write WAV file: " + path);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace casnet
