// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Forward pass of the compress-and-send network:
//
//   node m:  phi_m -> encoder -> DPR -> h_m                (shared weights)
//   FC:      h_r[k] queries node frames h_m[k-b .. k+c]      (cwq1)
//            concat(hbar_r, h_m) -> linear -> DPR per node   (align)
//            hbar_r[k] queries aligned frames                (cwq2)
//            DPR -> decoder with encoder skips -> |Y|^alpha
//
// Tensors are Tensor3 (channels x frames x bins). Attention works on whole
// frames flattened channel-major into D*F' vectors.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "casnet/archive.hpp"
#include "casnet/error.hpp"
#include "casnet/nn.hpp"
#include "casnet/tensor.hpp"

namespace casnet {

/// What CWQ uses in place of a node frame that is missing from its window.
enum class GapPolicy { LearnedPad, ZeroPad, Skip };

inline std::string to_string(GapPolicy p) {
  switch (p) {
    case GapPolicy::LearnedPad: return "learned";
    case GapPolicy::ZeroPad: return "zero";
    case GapPolicy::Skip: return "skip";
  }
  return "?";
}

inline GapPolicy gap_policy_from_string(const std::string& s) {
  if (s == "learned") return GapPolicy::LearnedPad;
  if (s == "zero") return GapPolicy::ZeroPad;
  if (s == "skip") return GapPolicy::Skip;
  throw FormatError("unknown gap policy: " + s);
}

struct ModelConfig {
  std::size_t d = 16;            // feature channels
  std::size_t f_prime = 32;      // reduced frequency bins
  std::size_t heads = 4;
  std::size_t b = 2;             // past frames in the CWQ window
  std::size_t c = 0;             // future frames (0 = causal)
  std::size_t dpr_hidden = 32;
  std::size_t freq_bins = 257;   // STFT bins at the encoder input
  std::size_t enc_time_kernel = 2;
  double alpha = 0.5;            // magnitude power compression
  GapPolicy gap_policy = GapPolicy::LearnedPad;

  static constexpr std::size_t kEncoderStages = 3;
  static constexpr std::size_t kFreqKernel = 3;

  std::size_t embed_dim() const { return d * f_prime; }

  /// Bin counts along the encoder: input, then one per stride-2 stage.
  std::vector<std::size_t> encoder_bins() const {
    std::vector<std::size_t> bins{freq_bins};
    for (std::size_t s = 0; s < kEncoderStages; ++s) {
      const std::size_t f = bins.back();
      bins.push_back((f + pad_right(f) - kFreqKernel) / 2 + 1);
    }
    return bins;
  }

  /// Asymmetric (right-only) padding that halves the bin count.
  static std::size_t pad_right(std::size_t bins) { return bins % 2 == 0 ? 1 : 0; }

  void validate() const {
    CASNET_CHECK(d > 0 && f_prime > 0 && heads > 0 && dpr_hidden > 0, Error, "model dimensions must be positive");
    CASNET_CHECK(embed_dim() % heads == 0, Error, "attention heads must divide D*F'");
    CASNET_CHECK(enc_time_kernel >= 1, Error, "encoder time kernel must be >= 1");
    CASNET_CHECK(alpha > 0.0 && alpha <= 1.0, Error, "alpha must be in (0, 1]");
    CASNET_CHECK(freq_bins >= 8, Error, "too few frequency bins");
    CASNET_CHECK(encoder_bins().back() == f_prime, Error,
                 "F' = " + std::to_string(f_prime) + " does not match the encoder output (" +
                     std::to_string(encoder_bins().back()) + " bins)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d", c.d},         {"f_prime", c.f_prime},     {"heads", c.heads},
          {"b", c.b},         {"c", c.c},                 {"dpr_hidden", c.dpr_hidden},
          {"freq_bins", c.freq_bins}, {"enc_time_kernel", c.enc_time_kernel}, {"alpha", c.alpha},
          {"gap_policy", to_string(c.gap_policy)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d = j.value("d", c.d);
    c.f_prime = j.value("f_prime", c.f_prime);
    c.heads = j.value("heads", c.heads);
    c.b = j.value("b", c.b);
    c.c = j.value("c", c.c);
    c.dpr_hidden = j.value("dpr_hidden", c.dpr_hidden);
    c.freq_bins = j.value("freq_bins", c.freq_bins);
    c.enc_time_kernel = j.value("enc_time_kernel", c.enc_time_kernel);
    c.alpha = j.value("alpha", c.alpha);
    c.gap_policy = gap_policy_from_string(j.value("gap_policy", std::string("learned")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Weight manifest

using WeightManifest = TensorArchive;
using TensorShape = std::vector<std::uint32_t>;

inline constexpr int kManifestFormat = 1;

namespace detail {

inline void add_dpr_tensors(std::vector<std::pair<std::string, TensorShape>>& out, const std::string& p,
                            const ModelConfig& c) {
  const auto D = static_cast<std::uint32_t>(c.d), H = static_cast<std::uint32_t>(c.dpr_hidden);
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string q = p + ".intra." + dir;
    out.push_back({q + ".w_ih", {4 * H, D}});
    out.push_back({q + ".w_hh", {4 * H, H}});
    out.push_back({q + ".bias", {4 * H}});
  }
  out.push_back({p + ".intra.proj.weight", {D, 2 * H}});
  out.push_back({p + ".intra.proj.bias", {D}});
  out.push_back({p + ".intra.norm.gamma", {D}});
  out.push_back({p + ".intra.norm.beta", {D}});
  out.push_back({p + ".inter.rnn.w_ih", {4 * H, D}});
  out.push_back({p + ".inter.rnn.w_hh", {4 * H, H}});
  out.push_back({p + ".inter.rnn.bias", {4 * H}});
  out.push_back({p + ".inter.proj.weight", {D, H}});
  out.push_back({p + ".inter.proj.bias", {D}});
  out.push_back({p + ".inter.norm.gamma", {D}});
  out.push_back({p + ".inter.norm.beta", {D}});
}

inline void add_cwq_tensors(std::vector<std::pair<std::string, TensorShape>>& out, const std::string& p,
                            const ModelConfig& c) {
  const auto E = static_cast<std::uint32_t>(c.embed_dim());
  out.push_back({p + ".kv_norm.gamma", {E}});
  out.push_back({p + ".kv_norm.beta", {E}});
  for (const char* proj : {"query", "key", "value", "out"}) {
    out.push_back({p + "." + proj + ".weight", {E, E}});
    out.push_back({p + "." + proj + ".bias", {E}});
  }
  out.push_back({p + ".pad", {E}});
}

inline void add_block_tensors(std::vector<std::pair<std::string, TensorShape>>& out, const std::string& p,
                              TensorShape weight, std::uint32_t channels) {
  out.push_back({p + ".weight", std::move(weight)});
  out.push_back({p + ".bias", {channels}});
  out.push_back({p + ".norm.gamma", {channels}});
  out.push_back({p + ".norm.beta", {channels}});
  out.push_back({p + ".prelu", {channels}});
}

}  // namespace detail

/// Every tensor a manifest must hold for `cfg`, with its exact shape.
inline std::vector<std::pair<std::string, TensorShape>> required_tensors(const ModelConfig& cfg) {
  const auto D = static_cast<std::uint32_t>(cfg.d);
  const auto kt = static_cast<std::uint32_t>(cfg.enc_time_kernel);
  const auto kf = static_cast<std::uint32_t>(ModelConfig::kFreqKernel);
  std::vector<std::pair<std::string, TensorShape>> out;
  detail::add_block_tensors(out, "enc.in", {D, 3, 1, 1}, D);
  for (std::size_t s = 1; s <= ModelConfig::kEncoderStages; ++s)
    detail::add_block_tensors(out, "enc.down" + std::to_string(s), {D, D, kt, kf}, D);
  detail::add_dpr_tensors(out, "enc.dpr", cfg);
  detail::add_cwq_tensors(out, "cwq1", cfg);
  out.push_back({"align.proj.weight", {D, 2 * D}});
  out.push_back({"align.proj.bias", {D}});
  detail::add_dpr_tensors(out, "align.dpr", cfg);
  detail::add_cwq_tensors(out, "cwq2", cfg);
  detail::add_dpr_tensors(out, "fuse.dpr", cfg);
  for (std::size_t s = 1; s <= ModelConfig::kEncoderStages; ++s)
    detail::add_block_tensors(out, "dec.up" + std::to_string(s), {2 * D, D, 1, kf}, D);
  out.push_back({"dec.out.weight", {1, D, 1, 1}});
  out.push_back({"dec.out.bias", {1}});
  return out;
}

/// Throws ShapeError naming the first missing or mis-shaped tensor.
inline void validate_manifest(const WeightManifest& w, const ModelConfig& cfg) {
  for (const auto& [name, shape] : required_tensors(cfg)) w.get(name, shape);
}

inline ModelConfig manifest_config(const WeightManifest& w) {
  CASNET_CHECK(w.meta.contains("config"), FormatError, "weight manifest has no config echo");
  CASNET_CHECK(w.meta.value("format", 0) == kManifestFormat, FormatError, "unsupported weight manifest format");
  return model_config_from_json(w.meta.at("config"));
}

/// Loads a manifest and checks it against its own config echo.
inline std::pair<WeightManifest, ModelConfig> load_manifest(const std::string& path) {
  WeightManifest w = WeightManifest::load(path);
  ModelConfig cfg = manifest_config(w);
  validate_manifest(w, cfg);
  return {std::move(w), cfg};
}

/// splitmix64; trivially reproducible outside C++.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [-1, 1).
  double symmetric() { return static_cast<double>(next() >> 11) * 0x1.0p-53 * 2.0 - 1.0; }

 private:
  std::uint64_t state_;
};

/// Untrained weights: fan-in scaled uniform for matrices, unit norm gains,
/// zero norm shifts, PReLU slope 0.25, and an output bias of 1 so the final
/// ReLU starts in its active region. Tensors are filled in the order of
/// required_tensors(), so the values depend only on (cfg, seed).
inline WeightManifest init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  WeightManifest w;
  w.meta = {{"format", kManifestFormat}, {"config", to_json(cfg)}, {"origin", "init"}, {"seed", seed}};
  for (const auto& [name, shape] : required_tensors(cfg)) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<float> data(n, 0.0f);
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".gamma")) {
      std::fill(data.begin(), data.end(), 1.0f);
    } else if (ends_with(".beta")) {
      // zero
    } else if (ends_with(".prelu")) {
      std::fill(data.begin(), data.end(), 0.25f);
    } else if (name == "dec.out.bias") {
      std::fill(data.begin(), data.end(), 1.0f);
    } else {
      double fan_in = 1.0;
      if (shape.size() >= 2) {
        for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        if (name.rfind("dec.up", 0) == 0) fan_in = static_cast<double>(shape[0]) * shape[3];
      } else if (ends_with(".pad")) {
        fan_in = 1.0 / 0.0025;  // scale 0.05
      } else {
        fan_in = static_cast<double>(shape[0]);
      }
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& v : data) v = static_cast<float>(bound * rng.symmetric());
    }
    w.set(name, shape, std::move(data));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderOutput {
  Tensor3 h;                   // D x T x F'
  std::vector<Tensor3> skips;  // per stride-2 stage, finest first
};

namespace detail {

inline std::span<const float> tensor(const WeightManifest& w, const std::string& name, const TensorShape& shape) {
  return w.get(name, shape);
}

inline Tensor3 encoder_block(const Tensor3& x, const WeightManifest& w, const std::string& p, std::size_t out_ch,
                             std::size_t kt, std::size_t kf, std::size_t stride, std::size_t out_bins) {
  const TensorShape wshape{static_cast<std::uint32_t>(out_ch), static_cast<std::uint32_t>(x.channels()),
                           static_cast<std::uint32_t>(kt), static_cast<std::uint32_t>(kf)};
  const TensorShape cshape{static_cast<std::uint32_t>(out_ch)};
  Tensor3 y = nn::conv2d(x, tensor(w, p + ".weight", wshape), tensor(w, p + ".bias", cshape), out_ch, kt, kf, stride,
                         0, out_bins);
  nn::frame_layer_norm(y, tensor(w, p + ".norm.gamma", cshape), tensor(w, p + ".norm.beta", cshape));
  nn::prelu(y, tensor(w, p + ".prelu", cshape));
  return y;
}

}  // namespace detail

Tensor3 dpr_forward(const Tensor3& h, const WeightManifest& w, const std::string& prefix, const ModelConfig& cfg);

inline EncoderOutput encode(const Tensor3& phi, const WeightManifest& w, const ModelConfig& cfg) {
  CASNET_CHECK(phi.channels() == 3 && phi.bins() == cfg.freq_bins && phi.frames() >= 1, ShapeError,
               "encoder input must be 3 x T x " + std::to_string(cfg.freq_bins) + ", got " + phi.shape_str());
  const auto bins = cfg.encoder_bins();
  EncoderOutput out;
  Tensor3 x = detail::encoder_block(phi, w, "enc.in", cfg.d, 1, 1, 1, bins[0]);
  for (std::size_t s = 1; s <= ModelConfig::kEncoderStages; ++s) {
    x = detail::encoder_block(x, w, "enc.down" + std::to_string(s), cfg.d, cfg.enc_time_kernel,
                              ModelConfig::kFreqKernel, 2, bins[s]);
    out.skips.push_back(x);
  }
  out.h = dpr_forward(x, w, "enc.dpr", cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Dual-path recurrence

/// Intra path: bidirectional LSTM across bins within each frame. Inter path:
/// forward-only LSTM across frames for each bin. Each path is followed by a
/// linear projection, a per-frame norm and a residual add.
inline Tensor3 dpr_forward(const Tensor3& h, const WeightManifest& w, const std::string& p, const ModelConfig& cfg) {
  CASNET_CHECK(h.channels() == cfg.d, ShapeError, "DPR input has " + std::to_string(h.channels()) + " channels, expected " + std::to_string(cfg.d));
  const std::size_t D = cfg.d, H = cfg.dpr_hidden, T = h.frames(), F = h.bins();
  const auto d32 = static_cast<std::uint32_t>(D), h32 = static_cast<std::uint32_t>(H);
  auto lstm = [&](const std::string& q) {
    return nn::LstmParams{w.get(q + ".w_ih", {4 * h32, d32}), w.get(q + ".w_hh", {4 * h32, h32}),
                          w.get(q + ".bias", {4 * h32}), H};
  };

  // intra
  Tensor3 intra(D, T, F);
  {
    const auto fwd = lstm(p + ".intra.fwd"), bwd = lstm(p + ".intra.bwd");
    const auto pw = w.get(p + ".intra.proj.weight", {d32, 2 * h32});
    const auto pb = w.get(p + ".intra.proj.bias", {d32});
    std::vector<float> seq(F * D), hid(F * 2 * H), out(D);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t d = 0; d < D; ++d) seq[f * D + d] = h(d, t, f);
      auto input = [&](std::size_t s) { return std::span<const float>(&seq[s * D], D); };
      nn::lstm_run(fwd, D, F, false, input,
                   [&](std::size_t s, std::span<const float> y) { std::copy(y.begin(), y.end(), &hid[s * 2 * H]); });
      nn::lstm_run(bwd, D, F, true, input,
                   [&](std::size_t s, std::span<const float> y) { std::copy(y.begin(), y.end(), &hid[s * 2 * H + H]); });
      for (std::size_t f = 0; f < F; ++f) {
        nn::linear(pw, pb, std::span<const float>(&hid[f * 2 * H], 2 * H), out);
        for (std::size_t d = 0; d < D; ++d) intra(d, t, f) = out[d];
      }
    }
    nn::frame_layer_norm(intra, w.get(p + ".intra.norm.gamma", {d32}), w.get(p + ".intra.norm.beta", {d32}));
    for (std::size_t i = 0; i < intra.data().size(); ++i) intra.data()[i] += h.data()[i];
  }

  // inter
  Tensor3 inter(D, T, F);
  {
    const auto rnn = lstm(p + ".inter.rnn");
    const auto pw = w.get(p + ".inter.proj.weight", {d32, h32});
    const auto pb = w.get(p + ".inter.proj.bias", {d32});
    std::vector<float> seq(T * D), out(D);
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d) seq[t * D + d] = intra(d, t, f);
      nn::lstm_run(
          rnn, D, T, false, [&](std::size_t s) { return std::span<const float>(&seq[s * D], D); },
          [&](std::size_t s, std::span<const float> y) {
            nn::linear(pw, pb, y, out);
            for (std::size_t d = 0; d < D; ++d) inter(d, s, f) = out[d];
          });
    }
    nn::frame_layer_norm(inter, w.get(p + ".inter.norm.gamma", {d32}), w.get(p + ".inter.norm.beta", {d32}));
    for (std::size_t i = 0; i < inter.data().size(); ++i) inter.data()[i] += intra.data()[i];
  }
  return inter;
}

// ---------------------------------------------------------------------------
// Cross-window query

struct AttentionTrace {
  std::vector<std::vector<float>> weights;  // [head][key]
};

/// Multi-head attention of one reference frame over a set of node frames,
/// plus the residual query: out = MHA(q, keys) + q. Keys and values are
/// layer-normalized and projected; projections are shared by all nodes.
class CrossWindowQuery {
 public:
  struct KeyValue {
    std::vector<float> key, value;
  };

  CrossWindowQuery(const WeightManifest& w, const std::string& prefix, const ModelConfig& cfg)
      : cfg_(cfg), embed_(cfg.embed_dim()), head_dim_(embed_ / cfg.heads) {
    const auto E = static_cast<std::uint32_t>(embed_);
    norm_gamma_ = w.get(prefix + ".kv_norm.gamma", {E});
    norm_beta_ = w.get(prefix + ".kv_norm.beta", {E});
    wq_ = w.get(prefix + ".query.weight", {E, E});
    bq_ = w.get(prefix + ".query.bias", {E});
    wk_ = w.get(prefix + ".key.weight", {E, E});
    bk_ = w.get(prefix + ".key.bias", {E});
    wv_ = w.get(prefix + ".value.weight", {E, E});
    bv_ = w.get(prefix + ".value.bias", {E});
    wo_ = w.get(prefix + ".out.weight", {E, E});
    bo_ = w.get(prefix + ".out.bias", {E});
    pad_ = w.get(prefix + ".pad", {E});
  }

  std::size_t embed_dim() const { return embed_; }

  /// Frame substituted for a gap, or nullopt when gaps are skipped.
  std::optional<std::vector<float>> gap_frame() const {
    switch (cfg_.gap_policy) {
      case GapPolicy::LearnedPad: return std::vector<float>(pad_.begin(), pad_.end());
      case GapPolicy::ZeroPad: return std::vector<float>(embed_, 0.0f);
      case GapPolicy::Skip: return std::nullopt;
    }
    return std::nullopt;
  }

  KeyValue project(std::span<const float> frame) const {
    CASNET_CHECK(frame.size() == embed_, ShapeError, "CWQ key frame has wrong size");
    std::vector<float> normed(frame.begin(), frame.end());
    nn::vector_layer_norm(normed, norm_gamma_, norm_beta_);
    KeyValue kv{std::vector<float>(embed_), std::vector<float>(embed_)};
    nn::linear(wk_, bk_, normed, kv.key);
    nn::linear(wv_, bv_, normed, kv.value);
    return kv;
  }

  std::vector<float> attend(std::span<const float> query, std::span<const KeyValue* const> keys,
                            AttentionTrace* trace = nullptr) const {
    CASNET_CHECK(query.size() == embed_, ShapeError, "CWQ query frame has wrong size");
    if (keys.empty()) throw Error("no context: CWQ key set is empty");
    std::vector<float> q(embed_), ctx(embed_, 0.0f), out(embed_);
    nn::linear(wq_, bq_, query, q);
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
    std::vector<float> score(keys.size());
    if (trace) trace->weights.assign(cfg_.heads, {});
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      const std::size_t off = hd * head_dim_;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < keys.size(); ++j) {
        float s = 0.0f;
        for (std::size_t i = 0; i < head_dim_; ++i) s += q[off + i] * keys[j]->key[off + i];
        score[j] = s * scale;
        mx = std::max(mx, score[j]);
      }
      double total = 0.0;
      for (auto& s : score) {
        s = std::exp(s - mx);
        total += s;
      }
      for (auto& s : score) s = static_cast<float>(s / total);
      for (std::size_t j = 0; j < keys.size(); ++j)
        for (std::size_t i = 0; i < head_dim_; ++i) ctx[off + i] += score[j] * keys[j]->value[off + i];
      if (trace) trace->weights[hd] = score;
    }
    nn::linear(wo_, bo_, ctx, out);
    for (std::size_t i = 0; i < embed_; ++i) out[i] += query[i];
    return out;
  }

 private:
  ModelConfig cfg_;
  std::size_t embed_, head_dim_;
  std::span<const float> norm_gamma_, norm_beta_, wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_, pad_;
};

/// One CWQ output frame. `windows[m]` lists node m's frames for the window
/// [k-b, k+c] (after clamping to the sequence); nullptr marks a gap.
inline std::vector<float> cwq_frame(std::span<const float> query, const std::vector<std::vector<const float*>>& windows,
                                    const WeightManifest& w, const std::string& prefix, const ModelConfig& cfg,
                                    AttentionTrace* trace = nullptr) {
  const CrossWindowQuery layer(w, prefix, cfg);
  const auto gap = layer.gap_frame();
  std::vector<CrossWindowQuery::KeyValue> kvs;
  for (const auto& win : windows)
    for (const float* f : win) {
      if (f) kvs.push_back(layer.project(std::span<const float>(f, layer.embed_dim())));
      else if (gap) kvs.push_back(layer.project(*gap));
    }
  std::vector<const CrossWindowQuery::KeyValue*> keys;
  for (const auto& kv : kvs) keys.push_back(&kv);
  return layer.attend(query, keys, trace);
}

inline constexpr std::int64_t kNeverArrives = std::numeric_limits<std::int64_t>::max();

/// Node features as seen by the fusion center. `arrival[j]` is the frame
/// clock step at which frame j became usable (kNeverArrives if it was lost
/// or late); an empty vector means every frame arrived on time.
struct NodeFeatures {
  Tensor3 feats;
  std::vector<std::int64_t> arrival;

  std::int64_t arrival_of(std::size_t j) const { return arrival.empty() ? static_cast<std::int64_t>(j) : arrival[j]; }

  /// Usable by the query for frame k, which runs at step k + c.
  bool available(std::size_t k, std::size_t j, const ModelConfig& cfg) const {
    return j < feats.frames() && arrival_of(j) <= static_cast<std::int64_t>(k + cfg.c);
  }
};

/// CWQ over a whole sequence: frame k of `query` attends to every node's
/// frames in [k-b, k+c] that are available at step k + c.
inline Tensor3 cwq_sequence(const Tensor3& query, std::span<const NodeFeatures> nodes, const WeightManifest& w,
                            const std::string& prefix, const ModelConfig& cfg) {
  CASNET_CHECK(query.channels() == cfg.d && query.bins() == cfg.f_prime, ShapeError,
               "CWQ query must be D x T x F', got " + query.shape_str());
  if (nodes.empty()) throw Error("no context: CWQ has no nodes");
  for (const auto& n : nodes)
    CASNET_CHECK(n.feats.same_shape(query), ShapeError,
                 "node feature shape " + n.feats.shape_str() + " does not match reference " + query.shape_str());
  const CrossWindowQuery layer(w, prefix, cfg);
  const std::size_t T = query.frames();
  std::vector<std::vector<std::optional<CrossWindowQuery::KeyValue>>> cache(nodes.size(),
                                                                           std::vector<std::optional<CrossWindowQuery::KeyValue>>(T));
  std::optional<CrossWindowQuery::KeyValue> gap_kv;
  if (auto g = layer.gap_frame()) gap_kv = layer.project(*g);

  Tensor3 out(cfg.d, T, cfg.f_prime);
  std::vector<const CrossWindowQuery::KeyValue*> keys;
  for (std::size_t k = 0; k < T; ++k) {
    keys.clear();
    const std::size_t lo = k >= cfg.b ? k - cfg.b : 0, hi = std::min(T - 1, k + cfg.c);
    for (std::size_t m = 0; m < nodes.size(); ++m)
      for (std::size_t j = lo; j <= hi; ++j) {
        if (nodes[m].available(k, j, cfg)) {
          if (!cache[m][j]) cache[m][j] = layer.project(nodes[m].feats.frame(j));
          keys.push_back(&*cache[m][j]);
        } else if (gap_kv) {
          keys.push_back(&*gap_kv);
        }
      }
    const auto y = layer.attend(query.frame(k), keys);
    std::copy(y.begin(), y.end(), out.frame(k).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment and fusion

/// Aligns each node to the refined reference, fuses the aligned features
/// with a second CWQ and refines the result with a final DPR. With no nodes
/// this reduces to the final DPR applied to the reference.
inline Tensor3 align_and_fuse(const Tensor3& h_ref_bar, std::span<const NodeFeatures> nodes, const WeightManifest& w,
                              const ModelConfig& cfg) {
  CASNET_CHECK(h_ref_bar.channels() == cfg.d && h_ref_bar.bins() == cfg.f_prime, ShapeError,
               "reference embedding must be D x T x F', got " + h_ref_bar.shape_str());
  if (nodes.empty()) return dpr_forward(h_ref_bar, w, "fuse.dpr", cfg);

  const std::size_t T = h_ref_bar.frames(), D = cfg.d, F = cfg.f_prime;
  const auto d32 = static_cast<std::uint32_t>(D);
  const auto pw = w.get("align.proj.weight", {d32, 2 * d32});
  const auto pb = w.get("align.proj.bias", {d32});
  const CrossWindowQuery cwq1(w, "cwq1", cfg);
  const auto gap = cwq1.gap_frame();

  std::vector<NodeFeatures> aligned(nodes.size());
  std::vector<float> in(2 * D), out(D);
  for (std::size_t m = 0; m < nodes.size(); ++m) {
    CASNET_CHECK(nodes[m].feats.same_shape(h_ref_bar), ShapeError,
                 "node feature shape " + nodes[m].feats.shape_str() + " does not match reference " + h_ref_bar.shape_str());
    Tensor3 proj(D, T, F);
    for (std::size_t t = 0; t < T; ++t) {
      // The node's own frame t, or the gap substitute if it is not there yet.
      const bool have = nodes[m].available(t, t, cfg);
      const float* node_frame = have ? nodes[m].feats.frame(t).data() : (gap ? gap->data() : nullptr);
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t d = 0; d < D; ++d) {
          in[d] = h_ref_bar(d, t, f);
          in[D + d] = node_frame ? node_frame[d * F + f] : 0.0f;
        }
        nn::linear(pw, pb, in, out);
        for (std::size_t d = 0; d < D; ++d) proj(d, t, f) = out[d];
      }
    }
    aligned[m].feats = dpr_forward(proj, w, "align.dpr", cfg);
  }
  const Tensor3 fused = cwq_sequence(h_ref_bar, aligned, w, "cwq2", cfg);
  return dpr_forward(fused, w, "fuse.dpr", cfg);
}

// ---------------------------------------------------------------------------
// Decoder

/// Mirrors the encoder with transposed convolutions, concatenating the
/// matching encoder skip at every stage, and ends in a 1x1 projection with
/// ReLU. Returns the power-compressed magnitude |Y|^alpha, frames x bins.
inline Grid<double> decode(const Tensor3& phi_hat, const std::vector<Tensor3>& skips, const WeightManifest& w,
                           const ModelConfig& cfg) {
  const auto bins = cfg.encoder_bins();
  const std::size_t stages = ModelConfig::kEncoderStages, D = cfg.d, T = phi_hat.frames();
  CASNET_CHECK(phi_hat.channels() == D && phi_hat.bins() == cfg.f_prime, ShapeError,
               "decoder input must be D x T x F', got " + phi_hat.shape_str());
  CASNET_CHECK(skips.size() == stages, ShapeError, "decoder needs one skip per encoder stage");
  for (std::size_t s = 0; s < stages; ++s)
    CASNET_CHECK(skips[s].channels() == D && skips[s].frames() == T && skips[s].bins() == bins[s + 1], ShapeError,
                 "skip " + std::to_string(s) + " has shape " + skips[s].shape_str());

  const auto d32 = static_cast<std::uint32_t>(D);
  const auto kf = static_cast<std::uint32_t>(ModelConfig::kFreqKernel);
  Tensor3 x = phi_hat;
  for (std::size_t u = 1; u <= stages; ++u) {
    const std::string p = "dec.up" + std::to_string(u);
    const Tensor3& skip = skips[stages - u];
    const std::size_t target = bins[stages - u];
    Tensor3 y = nn::conv_transpose_f(nn::concat_channels(x, skip), w.get(p + ".weight", {2 * d32, d32, 1, kf}),
                                     w.get(p + ".bias", {d32}), D, ModelConfig::kFreqKernel, 2, target);
    nn::frame_layer_norm(y, w.get(p + ".norm.gamma", {d32}), w.get(p + ".norm.beta", {d32}));
    nn::prelu(y, w.get(p + ".prelu", {d32}));
    x = std::move(y);
  }
  const Tensor3 m = nn::conv2d(x, w.get("dec.out.weight", {1, d32, 1, 1}), w.get("dec.out.bias", {1}), 1, 1, 1, 1, 0,
                               cfg.freq_bins);
  Grid<double> mag(T, cfg.freq_bins);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t f = 0; f < cfg.freq_bins; ++f) mag(t, f) = std::max(0.0f, m(0, t, f));
  return mag;
}

}  // namespace casnet
