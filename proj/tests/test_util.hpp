// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <random>
#include <string>
#include <vector>

#include "casnet/archive.hpp"
#include "casnet/dsp.hpp"
#include "casnet/model.hpp"
#include "casnet/tensor.hpp"

namespace casnet::testing {

inline std::string data_path(const std::string& name) { return std::string(CASNET_TEST_DATA) + "/" + name; }

/// Golden tensors are stored channel-major [C, T, F].
inline Tensor3 from_ctf(const NamedTensor& t) {
  Tensor3 x(t.shape.at(0), t.shape.at(1), t.shape.at(2));
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t s = 0; s < x.frames(); ++s)
      for (std::size_t f = 0; f < x.bins(); ++f) x(c, s, f) = t.data[(c * x.frames() + s) * x.bins() + f];
  return x;
}

/// Matches tests/data/model_small.json.
inline ModelConfig small_config() {
  ModelConfig c;
  c.d = 4;
  c.dpr_hidden = 8;
  return c;
}

inline const WeightManifest& small_weights() {
  static const WeightManifest w = WeightManifest::load(data_path("weights_small.casw"));
  return w;
}

inline Tensor3 random_tensor(std::size_t c, std::size_t t, std::size_t f, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, static_cast<float>(scale));
  Tensor3 x(c, t, f);
  for (auto& v : x.data()) v = g(rng);
  return x;
}

inline Waveform random_wave(std::size_t n, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) v = g(rng);
  return w;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace casnet::testing
