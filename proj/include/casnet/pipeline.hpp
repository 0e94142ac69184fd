// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// End-to-end enhancement: node-side encode and compress, lossy channel,
// fusion-center assembly, fusion and reconstruction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <vector>

#include "casnet/compressor.hpp"
#include "casnet/dsp.hpp"
#include "casnet/metrics.hpp"
#include "casnet/model.hpp"
#include "casnet/transport.hpp"

namespace casnet {

enum class TransportMode { Compressed, Raw };

struct PipelineOptions {
  TransportMode mode = TransportMode::Compressed;
  std::size_t rank = 4;
  ChannelModel channel;  // per-node jitter seeds are derived from channel.jitter_seed
  int gla_iters = 1;
  StftConfig stft;
  bool parallel = true;
};

struct LinkStats {
  std::size_t sent = 0;
  std::size_t accepted = 0;
  std::size_t late = 0;
  std::size_t corrupt = 0;
  std::size_t lost = 0;  // sent but never accepted
};

struct EnhanceResult {
  Waveform output;
  Grid<double> compressed_mag;  // decoder output |Y|^alpha, frames x bins
  std::optional<NsaReport> nsa;  // compressed mode only; raw mode sends at NSA 1
  LinkStats link;
};

/// Encoded features of every microphone; channel 0 is the reference.
struct ArrayEncoding {
  std::vector<EncoderOutput> enc;
  std::vector<Spectrogram> spec;
};

inline ArrayEncoding encode_array(const std::vector<Waveform>& mics, const WeightManifest& w, const ModelConfig& cfg,
                                  const StftConfig& stft_cfg, bool parallel) {
  CASNET_CHECK(!mics.empty(), Error, "at least one microphone signal is required");
  for (const auto& m : mics)
    CASNET_CHECK(m.size() == mics[0].size(), ShapeError, "microphone signals differ in length");
  ArrayEncoding out;
  out.spec.resize(mics.size());
  out.enc.resize(mics.size());
  auto one = [&](std::size_t m) {
    out.spec[m] = stft(mics[m], stft_cfg);
    out.enc[m] = encode(extract_features(out.spec[m], cfg.alpha), w, cfg);
  };
  if (parallel && mics.size() > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t m = 0; m < mics.size(); ++m) jobs.push_back(std::async(std::launch::async, one, m));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t m = 0; m < mics.size(); ++m) one(m);
  }
  return out;
}

/// Node side: compress every frame and emit it at step = frame index.
inline std::vector<Packet> node_send(const Tensor3& h, std::uint16_t node_id, std::size_t rank) {
  const auto factors = compress_sequence(h, rank);
  std::vector<Packet> out;
  out.reserve(factors.size());
  for (std::size_t t = 0; t < factors.size(); ++t) {
    const std::uint8_t flags = t + 1 == factors.size() ? kFlagLastFrame : 0;
    out.push_back(Packet{static_cast<std::int64_t>(t),
                         serialize_frame(factors[t], node_id, static_cast<std::uint32_t>(t), flags)});
  }
  return out;
}

/// Fusion-center side: replays arrivals step by step through a reorder
/// buffer and reconstructs each node's feature sequence. Node ids 1..M-1
/// map to slots 0..M-2. Frames with a bad CRC, unknown node or mismatched
/// dimensions are counted as corrupt and discarded.
inline std::vector<NodeFeatures> receive_frames(const std::vector<Packet>& arrivals, std::size_t num_nodes,
                                                std::size_t frames, const ModelConfig& cfg, LinkStats* stats = nullptr) {
  std::vector<NodeFeatures> nodes(num_nodes);
  for (auto& n : nodes) {
    n.feats = Tensor3(cfg.d, frames, cfg.f_prime);
    n.arrival.assign(frames, kNeverArrives);
  }
  FrameAssembler<std::uint8_t> asm_(num_nodes, cfg.b + cfg.c);
  LinkStats local;
  std::vector<const Packet*> order;
  for (const auto& p : arrivals) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const Packet* a, const Packet* b) { return a->step < b->step; });

  const std::int64_t last_step = static_cast<std::int64_t>(frames) - 1 + static_cast<std::int64_t>(cfg.c);
  std::size_t next = 0;
  for (std::int64_t s = 0; s <= last_step; ++s) {
    asm_.advance(s);
    for (; next < order.size() && order[next]->step <= s; ++next) {
      const Packet& p = *order[next];
      DecodedFrame f;
      try {
        f = deserialize_frame(p.bytes);
      } catch (const FormatError&) {
        ++local.corrupt;
        continue;
      }
      const auto& h = f.header;
      if (h.node_id < 1 || h.node_id > num_nodes || f.factors.rows() != cfg.d || f.factors.cols() != cfg.f_prime ||
          h.frame_index >= frames) {
        ++local.corrupt;
        continue;
      }
      const std::size_t slot = h.node_id - 1u;
      if (asm_.push(slot, h.frame_index, s, 0) != PushResult::Accepted) continue;
      const auto dense = decompress_frame(f.factors);
      auto dst = nodes[slot].feats.frame(h.frame_index);
      std::copy(dense.begin(), dense.end(), dst.begin());
      nodes[slot].arrival[h.frame_index] = s;
    }
  }
  const auto tot = asm_.totals();
  local.accepted = tot.accepted;
  local.late = tot.late + (order.size() - next);  // arrived after the last query
  if (stats) {
    stats->accepted += local.accepted;
    stats->late += local.late;
    stats->corrupt += local.corrupt;
  }
  return nodes;
}

/// Runs fusion and reconstruction for the reference channel given the node
/// features available at the fusion center.
inline EnhanceResult fuse_and_reconstruct(const EncoderOutput& ref, const Spectrogram& ref_spec,
                                          std::span<const NodeFeatures> nodes, std::size_t out_len,
                                          const WeightManifest& w, const ModelConfig& cfg, int gla_iters) {
  const Tensor3 h_bar = nodes.empty() ? ref.h : cwq_sequence(ref.h, nodes, w, "cwq1", cfg);
  const Tensor3 phi_hat = align_and_fuse(h_bar, nodes, w, cfg);
  EnhanceResult r;
  r.compressed_mag = decode(phi_hat, ref.skips, w, cfg);
  Grid<double> mag = r.compressed_mag;
  for (auto& v : mag.data()) v = std::pow(v, 1.0 / cfg.alpha);
  r.output = griffin_lim(mag, phase(ref_spec), ref_spec.config, gla_iters);
  r.output.samples.resize(out_len, 0.0);
  r.output.fs = ref_spec.config.fs;
  return r;
}

/// Full chain for an array of M microphone signals (index 0 = reference).
inline EnhanceResult enhance(const std::vector<Waveform>& mics, const WeightManifest& w, const ModelConfig& cfg,
                             const PipelineOptions& opt = {}) {
  cfg.validate();
  CASNET_CHECK(opt.stft.bins() == cfg.freq_bins, ShapeError, "STFT bin count does not match the model");
  const ArrayEncoding arr = encode_array(mics, w, cfg, opt.stft, opt.parallel);
  const std::size_t M = mics.size(), T = arr.enc[0].h.frames();

  std::vector<NodeFeatures> nodes;
  LinkStats link;
  if (opt.mode == TransportMode::Raw) {
    for (std::size_t m = 1; m < M; ++m) nodes.push_back(NodeFeatures{arr.enc[m].h, {}});
  } else if (M > 1) {
    std::vector<Packet> arrivals;
    for (std::size_t m = 1; m < M; ++m) {
      ChannelModel ch = opt.channel;
      ch.jitter_seed = opt.channel.jitter_seed + m;
      const auto sent = node_send(arr.enc[m].h, static_cast<std::uint16_t>(m), opt.rank);
      link.sent += sent.size();
      auto got = channel_apply(sent, ch);
      arrivals.insert(arrivals.end(), std::make_move_iterator(got.begin()), std::make_move_iterator(got.end()));
    }
    nodes = receive_frames(arrivals, M - 1, T, cfg, &link);
    link.lost = link.sent - link.accepted;
  }

  EnhanceResult r = fuse_and_reconstruct(arr.enc[0], arr.spec[0], nodes, mics[0].size(), w, cfg, opt.gla_iters);
  if (opt.mode == TransportMode::Compressed)
    r.nsa = casnet::nsa(T, cfg.d, cfg.f_prime, opt.rank, mics[0].size(), opt.stft.hop);
  r.link = link;
  return r;
}

/// Enhancement from a recorded packet stream (arrival steps included).
inline EnhanceResult enhance_from_packets(const Waveform& reference, const std::vector<Packet>& arrivals,
                                          std::size_t num_nodes, const WeightManifest& w, const ModelConfig& cfg,
                                          const StftConfig& stft_cfg = {}, int gla_iters = 1) {
  const ArrayEncoding arr = encode_array({reference}, w, cfg, stft_cfg, false);
  LinkStats link;
  link.sent = arrivals.size();
  const auto nodes = receive_frames(arrivals, num_nodes, arr.enc[0].h.frames(), cfg, &link);
  EnhanceResult r = fuse_and_reconstruct(arr.enc[0], arr.spec[0], nodes, reference.size(), w, cfg, gla_iters);
  r.link = link;
  return r;
}

/// Mean squared error between node features and their rank-a reconstruction,
/// over all nodes and frames.
inline double feature_mse(const std::vector<Tensor3>& feats, std::size_t rank) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& h : feats) {
    const Tensor3 rec = decompress_sequence(compress_sequence(h, rank), h.channels(), h.bins());
    for (std::size_t i = 0; i < h.data().size(); ++i) {
      const double d = static_cast<double>(h.data()[i]) - rec.data()[i];
      acc += d * d;
    }
    n += h.data().size();
  }
  CASNET_CHECK(n > 0, Error, "feature MSE needs at least one node");
  return acc / static_cast<double>(n);
}

}  // namespace casnet
