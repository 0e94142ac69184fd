// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Oracle MVDR beamformer from the true speech and noise components.

#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "casnet/dsp.hpp"
#include "casnet/error.hpp"

namespace casnet {

inline constexpr double kNoiseLoading = 1e-6;

/// Per-bin spatial covariances, each M x M Hermitian.
struct SpatialCovariance {
  std::vector<Eigen::MatrixXcd> speech;
  std::vector<Eigen::MatrixXcd> noise;  // diagonally loaded

  std::size_t mics() const { return speech.empty() ? 0 : static_cast<std::size_t>(speech[0].rows()); }
  std::size_t bins() const { return speech.size(); }
};

namespace detail {

inline Eigen::MatrixXcd time_averaged_outer(const std::vector<Spectrogram>& x, std::size_t f) {
  const std::size_t M = x.size(), T = x[0].frames();
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  Eigen::VectorXcd v(static_cast<Eigen::Index>(M));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t m = 0; m < M; ++m) v(static_cast<Eigen::Index>(m)) = x[m].data(t, f);
    r.noalias() += v * v.adjoint();
  }
  r /= static_cast<double>(T);
  // exact Hermitian symmetry
  return 0.5 * (r + r.adjoint());
}

inline void check_aligned(const std::vector<Spectrogram>& x, const char* what) {
  CASNET_CHECK(!x.empty(), ShapeError, std::string("no ") + what + " channels");
  for (const auto& s : x)
    CASNET_CHECK(s.frames() == x[0].frames() && s.bins() == x[0].bins(), ShapeError,
                 std::string(what) + " spectrograms are not aligned");
}

}  // namespace detail

inline SpatialCovariance estimate_oracle_cov(const std::vector<Spectrogram>& speech,
                                             const std::vector<Spectrogram>& noise) {
  detail::check_aligned(speech, "speech");
  detail::check_aligned(noise, "noise");
  CASNET_CHECK(speech.size() == noise.size() && speech[0].frames() == noise[0].frames() &&
                   speech[0].bins() == noise[0].bins(),
               ShapeError, "speech and noise spectrograms are not aligned");
  const std::size_t M = speech.size(), F = speech[0].bins();
  if (speech[0].frames() < M) throw Error("rank deficient: fewer frames than microphones");
  SpatialCovariance cov;
  cov.speech.resize(F);
  cov.noise.resize(F);
  for (std::size_t f = 0; f < F; ++f) {
    cov.speech[f] = detail::time_averaged_outer(speech, f);
    Eigen::MatrixXcd rn = detail::time_averaged_outer(noise, f);
    const double load = kNoiseLoading * rn.trace().real() / static_cast<double>(M);
    rn.diagonal().array() += load;
    cov.noise[f] = rn;
  }
  return cov;
}

/// Principal eigenvector of the speech covariance divided by its reference
/// entry, giving the relative transfer function with d[ref] = 1. A reference
/// entry that vanishes only gets its phase fixed.
inline Eigen::VectorXcd steering_vector(const Eigen::MatrixXcd& rs, std::size_t ref) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rs);
  Eigen::VectorXcd d = es.eigenvectors().col(rs.rows() - 1);
  const std::complex<double> r = d(static_cast<Eigen::Index>(ref));
  if (std::abs(r) > 1e-6 * d.norm()) {
    d /= r;
    d(static_cast<Eigen::Index>(ref)) = 1.0;
  } else if (std::abs(r) > 0.0) {
    d *= std::conj(r) / std::abs(r);
  }
  return d;
}

/// w = R_n^-1 d / (d^H R_n^-1 d).
inline Eigen::VectorXcd mvdr_weights(const Eigen::MatrixXcd& rn, const Eigen::VectorXcd& d) {
  Eigen::LLT<Eigen::MatrixXcd> llt(rn);
  if (llt.info() != Eigen::Success) throw Error("singular noise covariance");
  const Eigen::VectorXcd rd = llt.solve(d);
  const std::complex<double> denom = d.dot(rd);  // d^H R^-1 d
  if (!(std::abs(denom) > 0.0) || !rd.allFinite()) throw Error("singular noise covariance");
  return rd / denom;
}

struct MvdrFilter {
  std::vector<Eigen::VectorXcd> weights;   // per bin
  std::vector<Eigen::VectorXcd> steering;  // per bin
};

inline MvdrFilter design_mvdr(const SpatialCovariance& cov, std::size_t ref) {
  CASNET_CHECK(ref < cov.mics(), Error, "reference channel out of range");
  MvdrFilter out;
  for (std::size_t f = 0; f < cov.bins(); ++f) {
    out.steering.push_back(steering_vector(cov.speech[f], ref));
    out.weights.push_back(mvdr_weights(cov.noise[f], out.steering.back()));
  }
  return out;
}

/// Filter-and-sum Y = w^H X per bin, then inverse STFT.
inline Waveform mvdr_enhance(const std::vector<Spectrogram>& mix, const SpatialCovariance& cov, std::size_t ref,
                             MvdrFilter* filter_out = nullptr) {
  detail::check_aligned(mix, "mixture");
  CASNET_CHECK(mix.size() == cov.mics() && mix[0].bins() == cov.bins(), ShapeError,
               "mixture does not match the covariance dimensions");
  MvdrFilter flt = design_mvdr(cov, ref);
  Spectrogram y{Grid<cplx>(mix[0].frames(), mix[0].bins()), mix[0].config};
  for (std::size_t f = 0; f < mix[0].bins(); ++f) {
    const auto& w = flt.weights[f];
    for (std::size_t t = 0; t < mix[0].frames(); ++t) {
      cplx acc = 0.0;
      for (std::size_t m = 0; m < mix.size(); ++m) acc += std::conj(w(static_cast<Eigen::Index>(m))) * mix[m].data(t, f);
      y.data(t, f) = acc;
    }
  }
  if (filter_out) *filter_out = std::move(flt);
  return istft(y);
}

}  // namespace casnet
