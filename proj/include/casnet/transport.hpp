// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Wire format for compressed feature frames, a lossy/late channel model and
// the fusion-center reorder window.
//
// Frame layout (little-endian, 20-byte header):
//   0  magic "CASF"      4 bytes
//   4  version           u8   (= 1)
//   5  flags             u8
//   6  node_id           u16
//   8  frame_index       u32
//   12 D                 u8
//   13 F'                u8
//   14 rank              u16
//   16 payload_crc       u32  (CRC-32 of the payload bytes)
//   20 payload           float32: D*a left block row-major, then a*F' right block row-major

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "casnet/compressor.hpp"
#include "casnet/error.hpp"

namespace casnet {

inline constexpr std::size_t kFrameHeaderSize = 20;
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::uint8_t kFlagLastFrame = 0x01;

struct FrameHeader {
  std::uint8_t version = kWireVersion;
  std::uint8_t flags = 0;
  std::uint16_t node_id = 0;
  std::uint32_t frame_index = 0;
  std::uint8_t d = 0;
  std::uint8_t f_prime = 0;
  std::uint16_t rank = 0;
  std::uint32_t payload_crc = 0;

  std::size_t payload_bytes() const { return 4u * (std::size_t{d} + f_prime) * rank; }
  std::size_t frame_bytes() const { return kFrameHeaderSize + payload_bytes(); }
};

inline std::size_t frame_byte_count(std::size_t d, std::size_t f_prime, std::size_t rank) {
  return kFrameHeaderSize + 4 * (d + f_prime) * rank;
}

inline std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

namespace wire {

inline void put(std::vector<std::uint8_t>& b, std::uint64_t v, int nbytes) {
  for (int i = 0; i < nbytes; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get(std::span<const std::uint8_t> b, std::size_t off, int nbytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i) v |= std::uint64_t{b[off + i]} << (8 * i);
  return v;
}

}  // namespace wire

struct DecodedFrame {
  FrameHeader header;
  SvdFactors factors;
};

inline std::vector<std::uint8_t> serialize_frame(const SvdFactors& f, std::uint16_t node_id,
                                                 std::uint32_t frame_index, std::uint8_t flags = 0) {
  const std::size_t d = f.left.rows(), fp = f.right.cols();
  CASNET_CHECK(f.left.cols() == f.rank && f.right.rows() == f.rank, ShapeError, "inconsistent SVD factors");
  CASNET_CHECK(d <= 255 && fp <= 255, Error, "D and F' must fit the 8-bit header fields");
  CASNET_CHECK(f.rank >= 1 && f.rank <= std::min(d, fp), Error, "rank exceeds min(D, F')");

  std::vector<std::uint8_t> payload;
  payload.reserve(4 * f.payload_floats());
  for (float v : f.left.data()) wire::put(payload, std::bit_cast<std::uint32_t>(v), 4);
  for (float v : f.right.data()) wire::put(payload, std::bit_cast<std::uint32_t>(v), 4);

  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + payload.size());
  out.insert(out.end(), {'C', 'A', 'S', 'F'});
  wire::put(out, kWireVersion, 1);
  wire::put(out, flags, 1);
  wire::put(out, node_id, 2);
  wire::put(out, frame_index, 4);
  wire::put(out, d, 1);
  wire::put(out, fp, 1);
  wire::put(out, f.rank, 2);
  wire::put(out, crc32_bytes(payload), 4);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// Parses a header without touching the payload.
inline FrameHeader parse_header(std::span<const std::uint8_t> bytes) {
  CASNET_CHECK(bytes.size() >= kFrameHeaderSize, FormatError, "truncated frame header");
  CASNET_CHECK(std::memcmp(bytes.data(), "CASF", 4) == 0, FormatError, "bad frame magic");
  FrameHeader h;
  h.version = static_cast<std::uint8_t>(wire::get(bytes, 4, 1));
  CASNET_CHECK(h.version == kWireVersion, FormatError, "unsupported frame version " + std::to_string(h.version));
  h.flags = static_cast<std::uint8_t>(wire::get(bytes, 5, 1));
  h.node_id = static_cast<std::uint16_t>(wire::get(bytes, 6, 2));
  h.frame_index = static_cast<std::uint32_t>(wire::get(bytes, 8, 4));
  h.d = static_cast<std::uint8_t>(wire::get(bytes, 12, 1));
  h.f_prime = static_cast<std::uint8_t>(wire::get(bytes, 13, 1));
  h.rank = static_cast<std::uint16_t>(wire::get(bytes, 14, 2));
  h.payload_crc = static_cast<std::uint32_t>(wire::get(bytes, 16, 4));
  CASNET_CHECK(h.rank >= 1 && h.rank <= std::min(h.d, h.f_prime), FormatError, "frame rank exceeds min(D, F')");
  return h;
}

inline DecodedFrame deserialize_frame(std::span<const std::uint8_t> bytes) {
  DecodedFrame out;
  out.header = parse_header(bytes);
  const auto& h = out.header;
  CASNET_CHECK(bytes.size() == h.frame_bytes(), FormatError,
               "frame length " + std::to_string(bytes.size()) + " does not match header (" +
                   std::to_string(h.frame_bytes()) + ")");
  const auto payload = bytes.subspan(kFrameHeaderSize);
  CASNET_CHECK(crc32_bytes(payload) == h.payload_crc, FormatError, "payload CRC mismatch");
  out.factors = SvdFactors{Grid<float>(h.d, h.rank), Grid<float>(h.rank, h.f_prime), h.rank};
  std::size_t off = 0;
  for (float& v : out.factors.left.data()) {
    v = std::bit_cast<float>(static_cast<std::uint32_t>(wire::get(payload, off, 4)));
    off += 4;
  }
  for (float& v : out.factors.right.data()) {
    v = std::bit_cast<float>(static_cast<std::uint32_t>(wire::get(payload, off, 4)));
    off += 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel

/// A serialized frame as it leaves a node or reaches the fusion center.
/// `step` is the frame clock: a node emits frame k at step k, and the fusion
/// center consumes arrivals up to step k before answering query k.
struct Packet {
  std::int64_t step = 0;
  std::vector<std::uint8_t> bytes;
};

struct ChannelModel {
  double drop_prob = 0.0;
  std::uint32_t max_delay_frames = 0;
  std::uint64_t jitter_seed = 0;

  void validate() const { CASNET_CHECK(drop_prob >= 0.0 && drop_prob <= 1.0, Error, "drop probability must be in [0, 1]"); }
};

/// Drops each packet with `drop_prob` and delays survivors by a uniform
/// 0..max_delay frames. Output is ordered by arrival step; packets arriving
/// in the same step keep their input order.
inline std::vector<Packet> channel_apply(const std::vector<Packet>& in, const ChannelModel& ch) {
  ch.validate();
  std::mt19937_64 rng(ch.jitter_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> delay(0, ch.max_delay_frames);
  std::vector<Packet> out;
  for (const auto& p : in) {
    const bool dropped = u(rng) < ch.drop_prob;
    const std::uint32_t d = delay(rng);
    if (dropped) continue;
    out.push_back(Packet{p.step + d, p.bytes});
  }
  std::stable_sort(out.begin(), out.end(), [](const Packet& a, const Packet& b) { return a.step < b.step; });
  return out;
}

// ---------------------------------------------------------------------------
// Fusion-center assembly

enum class PushResult { Accepted, Late, Duplicate };

/// Bounded reorder buffer for one or more nodes. Frame i of a node can serve
/// queries i..i+lookback; a frame that arrives after step i+lookback can no
/// longer be used and is discarded. Only frames inside the current window are
/// kept, so memory per node stays at lookback+1 frames plus whatever arrived
/// early (bounded by the channel's max delay).
template <class Payload>
class FrameAssembler {
 public:
  struct Stats {
    std::size_t accepted = 0;
    std::size_t late = 0;
    std::size_t duplicates = 0;
  };

  FrameAssembler(std::size_t num_nodes, std::size_t lookback) : lookback_(lookback), nodes_(num_nodes) {}

  std::size_t lookback() const { return lookback_; }
  std::int64_t now() const { return now_; }
  const Stats& stats(std::size_t node) const { return nodes_.at(node).stats; }

  Stats totals() const {
    Stats s;
    for (const auto& n : nodes_) {
      s.accepted += n.stats.accepted;
      s.late += n.stats.late;
      s.duplicates += n.stats.duplicates;
    }
    return s;
  }

  /// Offers a frame that arrived at step `arrival` (must not precede now()).
  PushResult push(std::size_t node, std::int64_t frame_index, std::int64_t arrival, Payload payload) {
    auto& n = nodes_.at(node);
    if (arrival > frame_index + static_cast<std::int64_t>(lookback_) ||
        frame_index < now_ - static_cast<std::int64_t>(lookback_)) {
      ++n.stats.late;
      return PushResult::Late;
    }
    auto [it, inserted] = n.frames.try_emplace(frame_index, Entry{arrival, std::move(payload)});
    if (!inserted) {
      ++n.stats.duplicates;
      return PushResult::Duplicate;
    }
    ++n.stats.accepted;
    n.peak = std::max(n.peak, n.frames.size());
    return PushResult::Accepted;
  }

  /// Moves the clock to step k and evicts frames no query >= k can use.
  void advance(std::int64_t k) {
    now_ = k;
    for (auto& n : nodes_) {
      while (!n.frames.empty() && n.frames.begin()->first < k - static_cast<std::int64_t>(lookback_))
        n.frames.erase(n.frames.begin());
    }
  }

  /// Window [k-lookback, k] of one node at the current step, oldest first;
  /// nullptr marks a gap (lost, late or not yet arrived).
  std::vector<const Payload*> window(std::size_t node) const {
    const auto& n = nodes_.at(node);
    std::vector<const Payload*> out;
    for (std::int64_t j = now_ - static_cast<std::int64_t>(lookback_); j <= now_; ++j) {
      auto it = n.frames.find(j);
      out.push_back(it != n.frames.end() && it->second.arrival <= now_ ? &it->second.payload : nullptr);
    }
    return out;
  }

  /// Largest number of frames ever buffered for one node.
  std::size_t peak_buffered(std::size_t node) const { return nodes_.at(node).peak; }

 private:
  struct Entry {
    std::int64_t arrival;
    Payload payload;
  };
  struct Node {
    std::map<std::int64_t, Entry> frames;
    Stats stats;
    std::size_t peak = 0;
  };
  std::size_t lookback_;
  std::int64_t now_ = 0;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// .casf container: a sequence of records, each a u32 arrival step followed
// by one wire frame. The frame length is recovered from its header.

inline void write_casf(const std::string& path, const std::vector<Packet>& packets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame container: " + path);
  for (const auto& p : packets) {
    std::vector<std::uint8_t> rec;
    wire::put(rec, static_cast<std::uint32_t>(p.step), 4);
    rec.insert(rec.end(), p.bytes.begin(), p.bytes.end());
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
}

inline std::vector<Packet> read_casf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open frame container: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::span<const std::uint8_t> all(buf);
  std::vector<Packet> out;
  std::size_t pos = 0;
  while (pos < buf.size()) {
    CASNET_CHECK(pos + 4 + kFrameHeaderSize <= buf.size(), FormatError,
                 path + ": truncated record at byte " + std::to_string(pos));
    Packet p;
    p.step = static_cast<std::int64_t>(wire::get(all, pos, 4));
    const FrameHeader h = parse_header(all.subspan(pos + 4));
    CASNET_CHECK(pos + 4 + h.frame_bytes() <= buf.size(), FormatError,
                 path + ": truncated frame payload at byte " + std::to_string(pos));
    p.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                   buf.begin() + static_cast<std::ptrdiff_t>(pos + 4 + h.frame_bytes()));
    out.push_back(std::move(p));
    pos += 4 + h.frame_bytes();
  }
  return out;
}

}  // namespace casnet
