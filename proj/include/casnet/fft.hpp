// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "casnet/error.hpp"

namespace casnet {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Iterative radix-2 complex FFT with precomputed twiddles. Immutable after
/// construction, so one plan can be shared between threads.
class FftPlan {
 public:
  using cplx = std::complex<double>;

  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n) {
    CASNET_CHECK(is_pow2(n), Error, "FFT size must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = cplx(std::cos(ang), std::sin(ang));
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  /// In-place transform. The inverse is unnormalized; callers divide by n.
  void transform(std::span<cplx> x, bool inverse) const {
    CASNET_CHECK(x.size() == n_, ShapeError, "FFT buffer size mismatch");
    for (std::size_t i = 0; i < n_; ++i)
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      std::size_t half = len / 2, step = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < half; ++j) {
          cplx w = twiddle_[j * step];
          if (inverse) w = std::conj(w);
          cplx u = x[i + j];
          cplx v = x[i + j + half] * w;
          x[i + j] = u + v;
          x[i + j + half] = u - v;
        }
      }
    }
  }

  /// Real input of length n -> one-sided spectrum of n/2+1 bins.
  void forward_real(std::span<const double> in, std::span<cplx> out) const {
    std::vector<cplx> buf(n_);
    for (std::size_t i = 0; i < n_; ++i) buf[i] = cplx(i < in.size() ? in[i] : 0.0, 0.0);
    transform(buf, false);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = buf[k];
  }

  /// One-sided spectrum -> real signal of length n (Hermitian completion,
  /// normalized by 1/n). Returns the largest imaginary residue.
  double inverse_real(std::span<const cplx> half_spec, std::span<double> out) const {
    std::vector<cplx> buf(n_);
    std::size_t nb = n_ / 2 + 1;
    for (std::size_t k = 0; k < nb; ++k) buf[k] = half_spec[k];
    // DC and Nyquist must be real for the completion to be Hermitian.
    buf[0] = cplx(buf[0].real(), 0.0);
    buf[n_ / 2] = cplx(buf[n_ / 2].real(), 0.0);
    for (std::size_t k = 1; k < n_ / 2; ++k) buf[n_ - k] = std::conj(buf[k]);
    transform(buf, true);
    double inv_n = 1.0 / static_cast<double>(n_), max_imag = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      out[i] = buf[i].real() * inv_n;
      max_imag = std::max(max_imag, std::abs(buf[i].imag() * inv_n));
    }
    return max_imag;
  }

 private:
  std::size_t n_;
  std::vector<cplx> twiddle_;
  std::vector<std::size_t> bitrev_;
};

/// Linear convolution via zero-padded FFT, truncated to `out_len` samples.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b,
                                        std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  if (a.empty() || b.empty()) return out;
  std::size_t full = a.size() + b.size() - 1;
  FftPlan plan(next_pow2(full));
  std::size_t n = plan.size();
  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  plan.transform(fa, false);
  plan.transform(fb, false);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  plan.transform(fa, true);
  for (std::size_t i = 0; i < std::min(out_len, full); ++i) out[i] = fa[i].real() / static_cast<double>(n);
  return out;
}

}  // namespace casnet
