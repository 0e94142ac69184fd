// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// STFT analysis/synthesis, per-node input features and Griffin-Lim.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "casnet/error.hpp"
#include "casnet/fft.hpp"
#include "casnet/tensor.hpp"

namespace casnet {

using cplx = std::complex<double>;

/// Mono sample buffer.
struct Waveform {
  std::vector<double> samples;
  double fs = 16000.0;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

enum class WindowType { Hann };

struct StftConfig {
  std::size_t win_len = 512;
  std::size_t hop = 256;
  WindowType window = WindowType::Hann;
  double fs = 16000.0;

  std::size_t bins() const { return win_len / 2 + 1; }

  void validate() const {
    CASNET_CHECK(fs > 0.0, Error, "sample rate must be positive");
    CASNET_CHECK(win_len == 2 * hop, Error, "win_len must equal 2*hop for Hann COLA");
    CASNET_CHECK(is_pow2(win_len), Error, "win_len must be a power of two");
  }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

/// Periodic Hann window; sums to exactly 1 at 50% overlap.
inline std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.win_len);
  for (std::size_t n = 0; n < cfg.win_len; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                 static_cast<double>(cfg.win_len)));
  return w;
}

/// One-sided complex spectrogram, frames x bins.
struct Spectrogram {
  Grid<cplx> data;
  StftConfig config;

  std::size_t frames() const { return data.rows(); }
  std::size_t bins() const { return data.cols(); }
};

/// Number of frames without center padding.
inline std::size_t num_frames(std::size_t num_samples, const StftConfig& cfg) {
  if (num_samples < cfg.win_len) return 0;
  return 1 + (num_samples - cfg.win_len) / cfg.hop;
}

inline Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  CASNET_CHECK(x.size() >= cfg.win_len, Error, "insufficient samples for one STFT window");
  const std::size_t T = num_frames(x.size(), cfg), F = cfg.bins();
  const auto win = make_window(cfg);
  FftPlan plan(cfg.win_len);
  Spectrogram S{Grid<cplx>(T, F), cfg};
  std::vector<double> seg(cfg.win_len);
  for (std::size_t t = 0; t < T; ++t) {
    const double* src = x.data() + t * cfg.hop;
    for (std::size_t n = 0; n < cfg.win_len; ++n) seg[n] = src[n] * win[n];
    plan.forward_real(seg, S.data.row(t));
  }
  return S;
}

inline Spectrogram stft(const Waveform& x, const StftConfig& cfg) { return stft(std::span<const double>(x.samples), cfg); }

/// Window-sum floor for weighted overlap-add. Inside the signal the squared
/// Hann sum never drops below 0.5; the floor only bites in the first and
/// last few dozen samples where a single frame contributes.
inline constexpr double kWindowSumFloor = 1e-2;

/// Weighted overlap-add with the Hann synthesis window and per-sample
/// normalization by the squared-window sum. Output length is
/// (T-1)*hop + win_len.
inline Waveform istft(const Spectrogram& S, double* max_imag_residue = nullptr) {
  const auto& cfg = S.config;
  cfg.validate();
  CASNET_CHECK(S.bins() == cfg.bins(), ShapeError, "spectrogram bin count does not match STFT config");
  const std::size_t T = S.frames();
  Waveform y;
  y.fs = cfg.fs;
  if (T == 0) return y;
  const std::size_t len = (T - 1) * cfg.hop + cfg.win_len;
  const auto win = make_window(cfg);
  FftPlan plan(cfg.win_len);
  std::vector<double> acc(len, 0.0), wsum(len, 0.0), frame(cfg.win_len);
  double residue = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    residue = std::max(residue, plan.inverse_real(S.data.row(t), frame));
    for (std::size_t n = 0; n < cfg.win_len; ++n) {
      acc[t * cfg.hop + n] += frame[n] * win[n];
      wsum[t * cfg.hop + n] += win[n] * win[n];
    }
  }
  y.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i) y.samples[i] = acc[i] / std::max(wsum[i], kWindowSumFloor);
  if (max_imag_residue) *max_imag_residue = residue;
  return y;
}

inline Spectrogram polar_spectrogram(const Grid<double>& mag, const Grid<double>& phase, const StftConfig& cfg) {
  CASNET_CHECK(mag.rows() == phase.rows() && mag.cols() == phase.cols(), ShapeError,
               "magnitude/phase shape mismatch");
  CASNET_CHECK(mag.cols() == cfg.bins(), ShapeError, "magnitude bin count does not match STFT config");
  Spectrogram S{Grid<cplx>(mag.rows(), mag.cols()), cfg};
  for (std::size_t i = 0; i < mag.data().size(); ++i) S.data.data()[i] = std::polar(mag.data()[i], phase.data()[i]);
  return S;
}

inline Grid<double> magnitude(const Spectrogram& S) {
  Grid<double> m(S.frames(), S.bins());
  for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = std::abs(S.data.data()[i]);
  return m;
}

inline Grid<double> phase(const Spectrogram& S) {
  Grid<double> p(S.frames(), S.bins());
  for (std::size_t i = 0; i < p.data().size(); ++i) {
    const cplx z = S.data.data()[i];
    p.data()[i] = (z == cplx(0.0, 0.0)) ? 0.0 : std::arg(z);
  }
  return p;
}

/// Per-node input features: 3 x T x F with channel 0 = |S|^alpha,
/// channels 1/2 = cos/sin of the phase. Zero bins get phase maps (1, 0).
inline Tensor3 extract_features(const Spectrogram& S, double alpha = 0.5) {
  CASNET_CHECK(alpha > 0.0 && alpha <= 1.0, Error, "power-compression exponent must be in (0, 1]");
  const std::size_t T = S.frames(), F = S.bins();
  Tensor3 phi(3, T, F);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      const cplx z = S.data(t, f);
      const double mag = std::abs(z);
      phi(0, t, f) = static_cast<float>(std::pow(mag, alpha));
      if (mag > 0.0) {
        phi(1, t, f) = static_cast<float>(z.real() / mag);
        phi(2, t, f) = static_cast<float>(z.imag() / mag);
      } else {
        phi(1, t, f) = 1.0f;
        phi(2, t, f) = 0.0f;
      }
    }
  }
  return phi;
}

/// Replaces the magnitude of `S` by `mag`, keeping its phase (zero bins take
/// phase 0).
inline void impose_magnitude(Spectrogram& S, const Grid<double>& mag) {
  for (std::size_t i = 0; i < mag.data().size(); ++i) {
    cplx& z = S.data.data()[i];
    const double a = std::abs(z);
    z = a > 0.0 ? z * (mag.data()[i] / a) : cplx(mag.data()[i], 0.0);
  }
}

/// ||P(X) - X|| where P imposes `mag` on X: how far X is from carrying the
/// target magnitude.
inline double magnitude_residual(const Spectrogram& X, const Grid<double>& mag) {
  Spectrogram P = X;
  impose_magnitude(P, mag);
  double acc = 0.0;
  for (std::size_t i = 0; i < P.data.data().size(); ++i) acc += std::norm(P.data.data()[i] - X.data.data()[i]);
  return std::sqrt(acc);
}

/// Griffin-Lim: `iters` rounds of istft -> stft -> impose magnitude, then a
/// final istft. The default single round matches the deployed setting.
inline Waveform griffin_lim(const Grid<double>& mag, const Grid<double>& init_phase, const StftConfig& cfg,
                            int iters = 1) {
  CASNET_CHECK(iters >= 0, Error, "Griffin-Lim iteration count must be non-negative");
  for (double m : mag.data()) CASNET_CHECK(m >= 0.0, Error, "Griffin-Lim magnitude must be non-negative");
  Spectrogram S = polar_spectrogram(mag, init_phase, cfg);
  for (int i = 0; i < iters; ++i) {
    Waveform y = istft(S);
    S = stft(y, cfg);
    impose_magnitude(S, mag);
  }
  return istft(S);
}

/// Linear-interpolation resampler (used on WAV load).
inline Waveform resample_linear(const Waveform& x, double fs_out) {
  CASNET_CHECK(fs_out > 0.0 && x.fs > 0.0, Error, "sample rates must be positive");
  if (x.fs == fs_out || x.samples.empty()) return Waveform{x.samples, fs_out};
  const double ratio = x.fs / fs_out;
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(x.size() - 1) / ratio)) + 1;
  Waveform y;
  y.fs = fs_out;
  y.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i0);
    const double a = x.samples[i0], b = i0 + 1 < x.size() ? x.samples[i0 + 1] : a;
    y.samples[i] = a + frac * (b - a);
  }
  return y;
}

}  // namespace casnet
