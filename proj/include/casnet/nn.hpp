// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Inference-only building blocks over Tensor3 (channels x frames x bins).
// Every op here is frame-causal: output frame t reads input frames <= t.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "casnet/error.hpp"
#include "casnet/tensor.hpp"

namespace casnet::nn {

/// 2-D convolution, causal in time and strided in frequency.
/// weight: [out, in, kt, kf]; input frames before 0 and bins outside
/// [0, F) read as zero. The frequency axis is padded by `pad_left` in front.
inline Tensor3 conv2d(const Tensor3& x, std::span<const float> weight, std::span<const float> bias, std::size_t out_ch,
                      std::size_t kt, std::size_t kf, std::size_t stride_f, std::size_t pad_left, std::size_t out_bins) {
  const std::size_t in_ch = x.channels(), T = x.frames(), F = x.bins();
  CASNET_CHECK(weight.size() == out_ch * in_ch * kt * kf, ShapeError, "conv2d weight size mismatch");
  CASNET_CHECK(bias.size() == out_ch, ShapeError, "conv2d bias size mismatch");
  Tensor3 y(out_ch, T, out_bins);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      float* yo = &y(o, t, 0);
      std::fill(yo, yo + out_bins, bias[o]);
      for (std::size_t i = 0; i < in_ch; ++i) {
        for (std::size_t dt = 0; dt < kt; ++dt) {
          // tap dt reads frame t - (kt - 1) + dt
          if (t + dt + 1 < kt) continue;
          const std::size_t src_t = t + dt + 1 - kt;
          const float* xi = x.frame(src_t).data() + i * F;
          const float* wk = &weight[((o * in_ch + i) * kt + dt) * kf];
          for (std::size_t f = 0; f < out_bins; ++f) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < kf; ++k) {
              const long src_f = static_cast<long>(f * stride_f + k) - static_cast<long>(pad_left);
              if (src_f < 0 || src_f >= static_cast<long>(F)) continue;
              acc += wk[k] * xi[src_f];
            }
            yo[f] += acc;
          }
        }
      }
    }
  }
  return y;
}

/// Transposed convolution along frequency (time kernel 1).
/// weight: [in, out, 1, kf]; bins beyond `out_bins` are cropped.
inline Tensor3 conv_transpose_f(const Tensor3& x, std::span<const float> weight, std::span<const float> bias,
                                std::size_t out_ch, std::size_t kf, std::size_t stride_f, std::size_t out_bins) {
  const std::size_t in_ch = x.channels(), T = x.frames(), F = x.bins();
  CASNET_CHECK(weight.size() == in_ch * out_ch * kf, ShapeError, "transposed conv weight size mismatch");
  CASNET_CHECK(bias.size() == out_ch, ShapeError, "transposed conv bias size mismatch");
  Tensor3 y(out_ch, T, out_bins);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      float* yo = &y(o, t, 0);
      std::fill(yo, yo + out_bins, bias[o]);
      for (std::size_t i = 0; i < in_ch; ++i) {
        const float* xi = x.frame(t).data() + i * F;
        const float* wk = &weight[(i * out_ch + o) * kf];
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t k = 0; k < kf; ++k) {
            const std::size_t dst = f * stride_f + k;
            if (dst < out_bins) yo[dst] += wk[k] * xi[f];
          }
      }
    }
  }
  return y;
}

inline constexpr float kNormEps = 1e-5f;

/// Per-frame layer norm over (channels, bins) with per-channel affine.
inline void frame_layer_norm(Tensor3& x, std::span<const float> gamma, std::span<const float> beta) {
  const std::size_t C = x.channels(), F = x.bins();
  CASNET_CHECK(gamma.size() == C && beta.size() == C, ShapeError, "norm parameter size mismatch");
  for (std::size_t t = 0; t < x.frames(); ++t) {
    auto fr = x.frame(t);
    double mean = 0.0, var = 0.0;
    for (float v : fr) mean += v;
    mean /= static_cast<double>(fr.size());
    for (float v : fr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(fr.size());
    const float inv = static_cast<float>(1.0 / std::sqrt(var + kNormEps));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) {
        float& v = fr[c * F + f];
        v = gamma[c] * (v - static_cast<float>(mean)) * inv + beta[c];
      }
  }
}

/// Layer norm of one vector with elementwise affine.
inline void vector_layer_norm(std::span<float> x, std::span<const float> gamma, std::span<const float> beta) {
  CASNET_CHECK(gamma.size() == x.size() && beta.size() == x.size(), ShapeError, "norm parameter size mismatch");
  double mean = 0.0, var = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const float inv = static_cast<float>(1.0 / std::sqrt(var + kNormEps));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = gamma[i] * (x[i] - static_cast<float>(mean)) * inv + beta[i];
}

inline void prelu(Tensor3& x, std::span<const float> slope) {
  CASNET_CHECK(slope.size() == x.channels(), ShapeError, "PReLU slope size mismatch");
  for (std::size_t t = 0; t < x.frames(); ++t)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t f = 0; f < x.bins(); ++f) {
        float& v = x(c, t, f);
        if (v < 0.0f) v *= slope[c];
      }
}

/// y = W x + b, W row-major [out, in].
inline void linear(std::span<const float> w, std::span<const float> b, std::span<const float> x, std::span<float> y) {
  const std::size_t out = y.size(), in = x.size();
  CASNET_CHECK(w.size() == out * in && b.size() == out, ShapeError, "linear layer size mismatch");
  for (std::size_t o = 0; o < out; ++o) {
    const float* row = &w[o * in];
    float acc = 0.0f;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc + b[o];
  }
}

/// Channel concatenation of equally shaped (frames, bins) tensors.
inline Tensor3 concat_channels(const Tensor3& a, const Tensor3& b) {
  CASNET_CHECK(a.frames() == b.frames() && a.bins() == b.bins(), ShapeError,
               "cannot concatenate " + a.shape_str() + " with " + b.shape_str());
  Tensor3 y(a.channels() + b.channels(), a.frames(), a.bins());
  for (std::size_t t = 0; t < a.frames(); ++t) {
    auto dst = y.frame(t);
    auto fa = a.frame(t), fb = b.frame(t);
    std::copy(fa.begin(), fa.end(), dst.begin());
    std::copy(fb.begin(), fb.end(), dst.begin() + static_cast<std::ptrdiff_t>(fa.size()));
  }
  return y;
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

/// Single-layer LSTM (gate order i, f, g, o) with one combined bias.
struct LstmParams {
  std::span<const float> w_ih;  // [4H, in]
  std::span<const float> w_hh;  // [4H, H]
  std::span<const float> bias;  // [4H]
  std::size_t hidden = 0;
};

/// Runs the LSTM over `steps` inputs of width `in` (read via `input(s)`),
/// forward or reversed, writing hidden states via `output(s)`.
template <class In, class Out>
void lstm_run(const LstmParams& p, std::size_t in, std::size_t steps, bool reverse, In&& input, Out&& output) {
  const std::size_t H = p.hidden;
  CASNET_CHECK(p.w_ih.size() == 4 * H * in && p.w_hh.size() == 4 * H * H && p.bias.size() == 4 * H, ShapeError,
               "LSTM parameter size mismatch");
  std::vector<float> h(H, 0.0f), c(H, 0.0f), gates(4 * H);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t s = reverse ? steps - 1 - n : n;
    std::span<const float> x = input(s);
    for (std::size_t g = 0; g < 4 * H; ++g) {
      float acc = p.bias[g];
      const float* wi = &p.w_ih[g * in];
      for (std::size_t i = 0; i < in; ++i) acc += wi[i] * x[i];
      const float* wh = &p.w_hh[g * H];
      for (std::size_t j = 0; j < H; ++j) acc += wh[j] * h[j];
      gates[g] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const float ig = sigmoid(gates[j]), fg = sigmoid(gates[H + j]);
      const float gg = std::tanh(gates[2 * H + j]), og = sigmoid(gates[3 * H + j]);
      c[j] = fg * c[j] + ig * gg;
      h[j] = og * std::tanh(c[j]);
    }
    output(s, std::span<const float>(h));
  }
}

}  // namespace casnet::nn
