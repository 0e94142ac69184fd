// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "casnet/dsp.hpp"
#include "casnet/error.hpp"
#include "casnet/fft.hpp"

namespace casnet {

// ---------------------------------------------------------------------------
// Transmission accounting

/// Normalized sample amount: samples a node transmits divided by the raw
/// time-domain samples it would otherwise send.
struct NsaReport {
  std::size_t frames = 0;
  std::size_t d = 0, f_prime = 0, rank = 0;
  std::size_t hop = 0;
  std::size_t total_samples_sent = 0;  // T (D + F') a
  std::size_t raw_samples = 0;         // t * fs
  double nsa = 0.0;                    // exact, for this signal length
  double asymptotic = 0.0;             // (D + F') a / hop
};

inline NsaReport nsa(std::size_t frames, std::size_t d, std::size_t f_prime, std::size_t rank,
                     std::size_t signal_samples, std::size_t hop) {
  CASNET_CHECK(frames > 0 && d > 0 && f_prime > 0 && rank > 0 && signal_samples > 0 && hop > 0, Error,
               "NSA inputs must all be positive");
  NsaReport r{frames, d, f_prime, rank, hop, frames * (d + f_prime) * rank, signal_samples, 0.0, 0.0};
  r.nsa = static_cast<double>(r.total_samples_sent) / static_cast<double>(signal_samples);
  r.asymptotic = static_cast<double>((d + f_prime) * rank) / static_cast<double>(hop);
  return r;
}

// ---------------------------------------------------------------------------
// SI-SDR

inline constexpr double kSiSdrCapDb = 100.0;

inline double si_sdr(std::span<const double> est, std::span<const double> ref) {
  CASNET_CHECK(est.size() == ref.size(), ShapeError, "SI-SDR needs equal-length signals");
  const double ref_energy = std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0);
  CASNET_CHECK(ref_energy > 0.0, Error, "SI-SDR reference is all zeros");
  const double alpha = std::inner_product(est.begin(), est.end(), ref.begin(), 0.0) / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = alpha * ref[i];
    target += s * s;
    residual += (est[i] - s) * (est[i] - s);
  }
  if (residual <= 0.0) return kSiSdrCapDb;
  if (target <= 0.0) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

inline double si_sdr(const Waveform& est, const Waveform& ref) { return si_sdr(est.samples, ref.samples); }

// ---------------------------------------------------------------------------
// STOI (Taal et al., 2011): 10 kHz, 256-sample frames, 512-point FFT,
// 15 third-octave bands from 150 Hz, 30-frame (384 ms) segments,
// -15 dB clipping, 40 dB silent-frame removal.

namespace stoi_detail {

inline constexpr double kFs = 10000.0;
inline constexpr std::size_t kFrame = 256;
inline constexpr std::size_t kNfft = 512;
inline constexpr std::size_t kBands = 15;
inline constexpr double kMinFreq = 150.0;
inline constexpr std::size_t kSegment = 30;
inline constexpr double kBeta = -15.0;
inline constexpr double kDynRange = 40.0;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

/// Symmetric Hann without the zero end points (MATLAB's hanning(n)).
inline std::vector<double> matlab_hanning(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

/// Polyphase resampling by up/down with an Octave-compatible Kaiser-windowed
/// sinc (60 dB rejection), output centred like a zero-phase filter.
inline std::vector<double> resample_rational(std::span<const double> x, std::size_t up, std::size_t down) {
  const std::size_t g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == down) return {x.begin(), x.end()};
  const double rejection_db = 60.0;
  const double cutoff = 1.0 / (2.0 * static_cast<double>(std::max(up, down)));
  const double roll_off = cutoff / 10.0;
  const auto half = static_cast<long>(std::ceil((rejection_db - 8.0) / (28.714 * roll_off)));
  const double beta = 0.1102 * (rejection_db - 8.7);
  const std::size_t taps = 2 * static_cast<std::size_t>(half) + 1;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(static_cast<long>(i) - half);
    const double arg = 2.0 * cutoff * t;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = 2.0 * static_cast<double>(i) / static_cast<double>(taps - 1) - 1.0;
    const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / std::cyl_bessel_i(0.0, beta);
    h[i] = kaiser * 2.0 * static_cast<double>(up) * cutoff * sinc;
    sum += h[i];
  }
  for (auto& v : h) v = v / sum * static_cast<double>(up);

  const std::size_t n_out = (x.size() * up + down - 1) / down;
  std::vector<double> y(n_out, 0.0);
  for (std::size_t n = 0; n < n_out; ++n) {
    // y[n] = sum_i x[i] h[half + n*down - i*up]
    const long center = static_cast<long>(n * down) + half;
    long i_lo = std::max(0L, (center - static_cast<long>(taps) + 1 + static_cast<long>(up) - 1) / static_cast<long>(up));
    const long i_hi = std::min(static_cast<long>(x.size()) - 1, center / static_cast<long>(up));
    double acc = 0.0;
    for (long i = i_lo; i <= i_hi; ++i) acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(center - i * static_cast<long>(up))];
    y[n] = acc;
  }
  return y;
}

inline std::vector<std::vector<double>> frames_of(std::span<const double> x, std::size_t len, std::size_t hop,
                                                  const std::vector<double>& w) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i + len < x.size(); i += hop) {
    std::vector<double> f(len);
    for (std::size_t n = 0; n < len; ++n) f[n] = w[n] * x[i + n];
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<double> overlap_add(const std::vector<std::vector<double>>& frames, std::size_t hop) {
  if (frames.empty()) return {};
  const std::size_t len = frames[0].size();
  std::vector<double> out((frames.size() - 1) * hop + len, 0.0);
  for (std::size_t k = 0; k < frames.size(); ++k)
    for (std::size_t n = 0; n < len; ++n) out[k * hop + n] += frames[k][n];
  return out;
}

/// Drops frames more than 40 dB below the loudest clean frame.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = matlab_hanning(kFrame);
  auto xf = frames_of(x, kFrame, kFrame / 2, w);
  auto yf = frames_of(y, kFrame, kFrame / 2, w);
  std::vector<double> energy(xf.size());
  for (std::size_t k = 0; k < xf.size(); ++k) {
    double e = 0.0;
    for (double v : xf[k]) e += v * v;
    energy[k] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  std::vector<std::vector<double>> xk, yk;
  for (std::size_t k = 0; k < xf.size(); ++k)
    if (peak - kDynRange - energy[k] < 0.0) {
      xk.push_back(std::move(xf[k]));
      yk.push_back(std::move(yf[k]));
    }
  x = overlap_add(xk, kFrame / 2);
  y = overlap_add(yk, kFrame / 2);
}

/// Third-octave band envelopes, bands x frames.
inline std::vector<std::vector<double>> band_envelopes(std::span<const double> x) {
  const auto w = matlab_hanning(kFrame);
  const auto frames = frames_of(x, kFrame, kFrame / 2, w);
  const std::size_t nbins = kNfft / 2 + 1;
  std::vector<std::size_t> lo(kBands), hi(kBands);
  for (std::size_t b = 0; b < kBands; ++b) {
    const double k = static_cast<double>(b);
    const double fl = kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0);
    const double fh = kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0);
    auto nearest = [&](double f) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < nbins; ++i) {
        const double d = std::pow(static_cast<double>(i) * kFs / static_cast<double>(kNfft) - f, 2.0);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      return best;
    };
    lo[b] = nearest(fl);
    hi[b] = nearest(fh);
  }
  FftPlan plan(kNfft);
  std::vector<std::vector<double>> env(kBands, std::vector<double>(frames.size(), 0.0));
  std::vector<std::complex<double>> spec(nbins);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    plan.forward_real(frames[t], spec);
    for (std::size_t b = 0; b < kBands; ++b) {
      double acc = 0.0;
      for (std::size_t i = lo[b]; i < hi[b]; ++i) acc += std::norm(spec[i]);
      env[b][t] = std::sqrt(acc);
    }
  }
  return env;
}

}  // namespace stoi_detail

/// Short-time objective intelligibility of `est` against the clean `ref`.
inline double stoi(std::span<const double> est, std::span<const double> ref, double fs) {
  using namespace stoi_detail;
  CASNET_CHECK(est.size() == ref.size(), ShapeError, "STOI needs equal-length signals");
  CASNET_CHECK(fs > 0.0 && std::abs(fs - std::round(fs)) < 1e-9, Error, "STOI needs an integer sample rate");
  std::vector<double> x, y;
  if (fs != kFs) {
    x = resample_rational(ref, static_cast<std::size_t>(kFs), static_cast<std::size_t>(fs));
    y = resample_rational(est, static_cast<std::size_t>(kFs), static_cast<std::size_t>(fs));
  } else {
    x.assign(ref.begin(), ref.end());
    y.assign(est.begin(), est.end());
  }
  remove_silent_frames(x, y);
  const auto xe = band_envelopes(x), ye = band_envelopes(y);
  const std::size_t frames = xe[0].size();
  CASNET_CHECK(frames >= kSegment, Error, "signal too short for STOI (needs one 384 ms segment of non-silent speech)");

  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (std::size_t m = kSegment; m <= frames; ++m) {
    for (std::size_t b = 0; b < kBands; ++b) {
      double xn = 0.0, yn = 0.0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        xs[i] = xe[b][m - kSegment + i];
        ys[i] = ye[b][m - kSegment + i];
        xn += xs[i] * xs[i];
        yn += ys[i] * ys[i];
      }
      const double scale = std::sqrt(xn) / (std::sqrt(yn) + kEps);
      double xmean = 0.0, ymean = 0.0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        ys[i] = std::min(ys[i] * scale, xs[i] * (1.0 + clip));
        xmean += xs[i];
        ymean += ys[i];
      }
      xmean /= kSegment;
      ymean /= kSegment;
      double xx = 0.0, yy = 0.0, xy = 0.0;
      for (std::size_t i = 0; i < kSegment; ++i) {
        const double a = xs[i] - xmean, c = ys[i] - ymean;
        xx += a * a;
        yy += c * c;
        xy += a * c;
      }
      total += xy / ((std::sqrt(xx) + kEps) * (std::sqrt(yy) + kEps));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline double stoi(const Waveform& est, const Waveform& ref) {
  CASNET_CHECK(est.fs == ref.fs, Error, "STOI inputs must share a sample rate");
  return stoi(est.samples, ref.samples, est.fs);
}

}  // namespace casnet
