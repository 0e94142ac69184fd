// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "casnet/casnet.hpp"

using namespace casnet;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const ModelConfig& default_config() {
  static const ModelConfig cfg;
  return cfg;
}

const WeightManifest& default_weights() {
  static const WeightManifest w = init_weights(default_config(), 1);
  return w;
}

Tensor3 random_tensor(std::size_t c, std::size_t t, std::size_t f, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor3 x(c, t, f);
  for (auto& v : x.data()) v = g(rng);
  return x;
}

std::vector<Waveform> scene_mics(std::uint64_t seed, std::size_t M, double seconds) {
  SceneSpec spec = random_scene(seed, M, 0.0);
  spec.duration_s = seconds;
  return render_scene(spec).mix;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// --- criteria ----------------------------------------------------------------

Outcome nsa_reproduction() {
  const auto r = nsa(249, 16, 32, 4, 64000, 256);
  bool ok = r.asymptotic == 0.75;
  for (std::size_t a = 1; a <= 16; ++a) {
    const double v = nsa(249, 16, 32, a, 64000, 256).asymptotic;
    ok = ok && v == 0.1875 * double(a);
    if (a > 1) ok = ok && v - nsa(249, 16, 32, a - 1, 64000, 256).asymptotic == 0.1875;
  }
  return {ok, fmt("asymptotic NSA at a=4 is %.6f; slope %.6f per rank over a=1..16", r.asymptotic, 0.1875)};
}

Outcome eckart_young() {
  std::mt19937_64 rng(2026);
  std::normal_distribution<float> g(0.0f, 1.0f);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> x(16 * 32);
    for (auto& v : x) v = g(rng);
    Eigen::MatrixXd m(16, 32);
    double energy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m(static_cast<Eigen::Index>(i / 32), static_cast<Eigen::Index>(i % 32)) = x[i];
      energy += double(x[i]) * x[i];
    }
    const Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
    for (std::size_t a : {1u, 4u, 8u, 16u}) {
      const auto y = decompress_frame(compress_frame(x, 16, 32, a));
      double err2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) err2 += (double(x[i]) - y[i]) * (double(x[i]) - y[i]);
      const double tail2 = s.tail(static_cast<Eigen::Index>(16 - a)).squaredNorm();
      worst = std::max(worst, std::abs(err2 - tail2) / energy);
    }
  }
  return {worst <= 1e-6, fmt("1000 matrices, a in {1,4,8,16}: max |err^2 - tail^2| / ||A||^2 = %.2e (tol 1e-6)", worst)};
}

Outcome lossless_full_rank() {
  const auto mics = scene_mics(31, 6, 4.0);
  PipelineOptions raw;
  raw.mode = TransportMode::Raw;
  PipelineOptions full;
  full.rank = 16;
  const auto a = enhance(mics, default_weights(), default_config(), raw);
  const auto b = enhance(mics, default_weights(), default_config(), full);
  const double d = max_abs_diff(a.output.samples, b.output.samples);
  return {d <= 1e-5, fmt("M=6, 4 s: max sample difference a=16 vs raw = %.2e (tol 1e-5)", d)};
}

Outcome causality() {
  const ModelConfig& cfg = default_config();
  const auto& w = default_weights();
  std::mt19937_64 rng(77);
  std::size_t violations = 0;

  for (int trial = 0; trial < 50; ++trial) {  // cwq
    const std::size_t T = 8, k = rng() % (T - 1);
    const Tensor3 q = random_tensor(cfg.d, T, cfg.f_prime, rng);
    std::vector<NodeFeatures> nodes{{random_tensor(cfg.d, T, cfg.f_prime, rng), {}},
                                    {random_tensor(cfg.d, T, cfg.f_prime, rng), {}}};
    const auto a = cwq_sequence(q, nodes, w, "cwq1", cfg);
    const std::size_t j = k + 1 + rng() % (T - k - 1);
    for (auto& v : nodes[rng() % 2].feats.frame(j)) v += 1.0f;
    const auto b = cwq_sequence(q, nodes, w, "cwq1", cfg);
    for (std::size_t t = 0; t <= k; ++t)
      if (!std::equal(a.frame(t).begin(), a.frame(t).end(), b.frame(t).begin())) ++violations;
  }

  for (int trial = 0; trial < 50; ++trial) {  // dpr inter path
    const std::size_t T = 8, k = rng() % (T - 1);
    const Tensor3 x = random_tensor(cfg.d, T, cfg.f_prime, rng);
    Tensor3 x2 = x;
    for (auto& v : x2.frame(k + 1 + rng() % (T - k - 1))) v -= 1.0f;
    const auto a = dpr_forward(x, w, "fuse.dpr", cfg);
    const auto b = dpr_forward(x2, w, "fuse.dpr", cfg);
    for (std::size_t t = 0; t <= k; ++t)
      if (!std::equal(a.frame(t).begin(), a.frame(t).end(), b.frame(t).begin())) ++violations;
  }

  // end to end: samples >= k*hop + win belong only to frames > k
  std::vector<std::vector<Waveform>> scenes;
  std::vector<Grid<double>> base;
  PipelineOptions opt;
  for (std::uint64_t s = 0; s < 5; ++s) {
    scenes.push_back(scene_mics(40 + s, 3, 1.0));
    base.push_back(enhance(scenes.back(), w, cfg, opt).compressed_mag);
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t s = trial % 5;
    const std::size_t T = base[s].rows(), k = rng() % (T - 1);
    auto mics = scenes[s];
    const std::size_t start = k * 256 + 512;
    auto& ch = mics[rng() % mics.size()].samples;
    std::normal_distribution<double> g(0.0, 0.3);
    for (std::size_t i = start; i < std::min(ch.size(), start + 256 + rng() % 2000); ++i) ch[i] += g(rng);
    const auto out = enhance(mics, w, cfg, opt).compressed_mag;
    for (std::size_t t = 0; t <= k; ++t)
      for (std::size_t f = 0; f < out.cols(); ++f)
        if (out(t, f) != base[s](t, f)) {
          ++violations;
          break;
        }
  }
  return {violations == 0, fmt("b=2 c=0, 50 trials each for cwq, dpr inter path, end to end: %.0f violations", double(violations))};
}

Outcome monotonicity() {
  std::mt19937_64 rng(5);
  std::size_t violations = 0, strict_checks = 0;
  for (int seq = 0; seq < 100; ++seq) {
    Tensor3 h = random_tensor(16, 8, 32, rng);
    if (seq % 5 == 4) {  // per-frame rank r < 16, so sigma_{a+1} = 0 for a >= r
      const std::size_t r = 1 + rng() % 8;
      const Tensor3 u = random_tensor(16, 8, r, rng), v = random_tensor(r, 8, 32, rng);
      for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t i = 0; i < 16; ++i)
          for (std::size_t j = 0; j < 32; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < r; ++k) acc += double(u(i, t, k)) * v(k, t, j);
            h(i, t, j) = static_cast<float>(acc);
          }
    }
    double energy = 0.0;
    for (float x : h.data()) energy += double(x) * x;
    energy /= double(h.data().size());
    // largest sigma_a / sigma_1 over frames, a = 1..16
    std::vector<double> rel(17, 0.0);
    for (std::size_t t = 0; t < 8; ++t) {
      Grid<double> m(16, 32);
      for (std::size_t i = 0; i < 16 * 32; ++i) m.data()[i] = h.frame(t)[i];
      const auto svd = jacobi_svd(m);
      for (std::size_t a = 1; a <= 16; ++a) rel[a] = std::max(rel[a], svd.sigma[a - 1] / std::max(svd.sigma[0], 1e-300));
    }
    std::vector<double> mse(17, 0.0);
    for (std::size_t a = 1; a <= 16; ++a) mse[a] = feature_mse({h}, a);
    for (std::size_t a = 1; a < 16; ++a) {
      if (mse[a + 1] > mse[a] + 1e-12 * energy) ++violations;  // float32 factor rounding
      if (rel[a + 1] > 1e-4) {
        ++strict_checks;
        if (!(mse[a + 1] < mse[a])) ++violations;
      }
    }
  }
  return {violations == 0, fmt("100 sequences: %.0f violations; %.0f strict-decrease checks where sigma_{a+1} > 0",
                               double(violations), double(strict_checks))};
}

Outcome stft_gla() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.1);
  const StftConfig cfg;
  double worst_cola = 0.0, worst_gla = 0.0;
  auto interior_rel = [](const Waveform& y, const Waveform& x) {
    const std::size_t n = std::min(y.size(), x.size());
    double err = 0.0, peak = 0.0;
    for (std::size_t i = 512; i + 512 < n; ++i) {
      err = std::max(err, std::abs(y.samples[i] - x.samples[i]));
      peak = std::max(peak, std::abs(x.samples[i]));
    }
    return err / peak;
  };
  for (int trial = 0; trial < 100; ++trial) {
    Waveform x;
    x.samples.resize(64000);
    for (auto& v : x.samples) v = g(rng);
    const auto S = stft(x, cfg);
    worst_cola = std::max(worst_cola, interior_rel(istft(S), x));
    if (trial < 10) worst_gla = std::max(worst_gla, interior_rel(griffin_lim(magnitude(S), phase(S), cfg, 1), x));
  }
  return {worst_cola <= 1e-6 && worst_gla <= 1e-5,
          fmt("100 x 4 s: COLA interior error %.2e (tol 1e-6); GLA(1) on consistent spectrogram %.2e (tol 1e-5)",
              worst_cola, worst_gla)};
}

Outcome mvdr_direction() {
  int wins = 0;
  double gain = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sc = render_scene(random_scene(seed, 6, 0.0, 1 + seed % 3));
    std::vector<Spectrogram> S, N, X;
    for (std::size_t m = 0; m < 6; ++m) {
      S.push_back(stft(sc.speech[m], StftConfig{}));
      N.push_back(stft(sc.noise[m], StftConfig{}));
      X.push_back(stft(sc.mix[m], StftConfig{}));
    }
    Waveform y = mvdr_enhance(X, estimate_oracle_cov(S, N), 0);
    y.samples.resize(sc.target.size(), 0.0);
    const double d = si_sdr(y, sc.target) - si_sdr(sc.mix[0], sc.target);
    gain += d;
    wins += d > 0.0;
  }
  return {wins >= 19, fmt("M=6, 0 dB: MVDR beats noisy reference in %.0f/20 scenes (need 19), mean gain %.2f dB",
                          double(wins), gain / 20.0)};
}

Outcome wire_format() {
  std::mt19937_64 rng(99);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::size_t bad_roundtrip = 0, bad_size = 0, missed = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t a = 1 + rng() % 16;
    SvdFactors f{Grid<float>(16, a), Grid<float>(a, 32), a};
    for (auto& v : f.left.data()) v = g(rng);
    for (auto& v : f.right.data()) v = g(rng);
    const auto node = static_cast<std::uint16_t>(rng());
    const auto idx = static_cast<std::uint32_t>(rng());
    const auto bytes = serialize_frame(f, node, idx, static_cast<std::uint8_t>(rng() % 2));
    if (bytes.size() != 20 + 4 * (16 + 32) * a) ++bad_size;
    const auto d = deserialize_frame(bytes);
    if (!(d.factors == f) || d.header.node_id != node || d.header.frame_index != idx ||
        serialize_frame(d.factors, d.header.node_id, d.header.frame_index, d.header.flags) != bytes)
      ++bad_roundtrip;
    if (trial < 1000) {
      auto corrupt = bytes;
      corrupt[kFrameHeaderSize + rng() % (bytes.size() - kFrameHeaderSize)] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      try {
        deserialize_frame(corrupt);
        ++missed;
      } catch (const FormatError&) {
      }
    }
  }
  return {bad_roundtrip == 0 && bad_size == 0 && missed == 0,
          fmt("1e4 round trips: %.0f mismatches, %.0f wrong sizes; 1e3 payload-byte corruptions: %.0f undetected",
              double(bad_roundtrip), double(bad_size), double(missed))};
}

Outcome channel_generality() {
  std::size_t failures = 0;
  for (std::size_t M = 1; M <= 12; ++M) {
    try {
      const auto mics = scene_mics(500 + M, M, 2.0);
      const auto r = enhance(mics, default_weights(), default_config());
      bool finite = true;
      for (double v : r.output.samples) finite = finite && std::isfinite(v);
      if (r.output.size() != mics[0].size() || !finite) ++failures;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "M=%zu: %s\n", M, e.what());
      ++failures;
    }
  }
  return {failures == 0, fmt("one manifest, M=1..12: %.0f failures (length or finiteness)", double(failures))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"nsa_reproduction", nsa_reproduction},   {"eckart_young", eckart_young},
      {"lossless_full_rank", lossless_full_rank}, {"causality", causality},
      {"monotonicity", monotonicity},             {"stft_gla", stft_gla},
      {"mvdr_direction", mvdr_direction},         {"wire_format", wire_format},
      {"channel_generality", channel_generality},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-20s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
