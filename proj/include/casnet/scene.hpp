// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Multichannel noisy scene synthesis: shoebox image-method RIRs with
// fractional delays, x_m = y * h_m + n_m with the noise scaled to a target
// SNR at the reference channel (index 0).

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "casnet/dsp.hpp"
#include "casnet/error.hpp"
#include "casnet/fft.hpp"

namespace casnet {

using Vec3 = std::array<double, 3>;

inline double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

struct Room {
  Vec3 dims{6.0, 5.0, 3.0};
  int order = 6;             // max reflection order, 0 = anechoic
  double absorption = 0.5;   // energy absorption of every wall, (0, 1]
  double c = 343.0;          // speed of sound, m/s

  /// Pressure reflection coefficient derived from the energy absorption.
  double reflection() const { return std::sqrt(1.0 - absorption); }

  bool contains(const Vec3& p) const {
    for (int i = 0; i < 3; ++i)
      if (!(p[i] > 0.0 && p[i] < dims[i])) return false;
    return true;
  }

  void validate() const {
    for (double d : dims) CASNET_CHECK(d > 0.0, Error, "room dimensions must be positive");
    CASNET_CHECK(absorption > 0.0 && absorption <= 1.0, Error, "wall absorption must be in (0, 1]");
    CASNET_CHECK(order >= 0, Error, "reflection order must be non-negative");
    CASNET_CHECK(c > 0.0, Error, "speed of sound must be positive");
  }
};

enum class NoiseKind { White, Pink, Babble, File };
enum class TargetMode { Reverberant, DirectPath };

struct NoiseSpec {
  Vec3 position{1.0, 1.0, 1.5};
  NoiseKind kind = NoiseKind::Pink;
  std::string path;  // only for NoiseKind::File
};

struct SceneSpec {
  Room room;
  Vec3 source{2.0, 2.0, 1.5};
  std::vector<Vec3> mics;
  std::vector<NoiseSpec> noises;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  double duration_s = 4.0;
  TargetMode target = TargetMode::Reverberant;
  std::string speech_path;  // empty = synthesize from seed

  void validate() const {
    room.validate();
    CASNET_CHECK(!mics.empty(), Error, "scene needs at least one microphone");
    CASNET_CHECK(noises.size() >= 1 && noises.size() <= 3, Error, "scene needs 1 to 3 noise sources");
    CASNET_CHECK(std::isfinite(snr_db), Error, "SNR must be finite");
    CASNET_CHECK(room.contains(source), Error, "source position is outside the room");
    for (const auto& m : mics) CASNET_CHECK(room.contains(m), Error, "microphone position is outside the room");
    for (const auto& n : noises) CASNET_CHECK(room.contains(n.position), Error, "noise position is outside the room");
  }
};

// ---------------------------------------------------------------------------
// Image method

struct ImageSource {
  Vec3 position;
  int reflections = 0;
  double amplitude = 0.0;  // reflection product / (4 pi d)
  double delay = 0.0;      // samples
};

/// All shoebox image sources with at most `order` wall reflections.
inline std::vector<ImageSource> image_sources(const Room& room, const Vec3& src, const Vec3& mic, int order,
                                              double fs) {
  room.validate();
  CASNET_CHECK(order >= 0, Error, "reflection order must be non-negative");
  CASNET_CHECK(distance(src, mic) > 1e-9, Error, "coincident geometry: source and microphone overlap");
  const double beta = room.reflection();
  std::vector<ImageSource> out;
  for (int nx = -order; nx <= order; ++nx)
    for (int ny = -order; ny <= order; ++ny)
      for (int nz = -order; nz <= order; ++nz)
        for (int q = 0; q < 8; ++q) {
          const std::array<int, 3> n{nx, ny, nz};
          const std::array<int, 3> qq{q & 1, (q >> 1) & 1, (q >> 2) & 1};
          int refl = 0;
          ImageSource img;
          for (int i = 0; i < 3; ++i) {
            refl += std::abs(n[i] - qq[i]) + std::abs(n[i]);
            img.position[i] = (1 - 2 * qq[i]) * src[i] + 2.0 * n[i] * room.dims[i];
          }
          if (refl > order) continue;
          const double d = distance(img.position, mic);
          img.reflections = refl;
          img.amplitude = std::pow(beta, refl) / (4.0 * std::numbers::pi * d);
          img.delay = d / room.c * fs;
          out.push_back(img);
        }
  return out;
}

/// Half-width of the windowed-sinc fractional-delay kernel (81 taps).
inline constexpr int kSincHalfWidth = 40;

/// Adds a Hann-windowed sinc impulse of `amp` at fractional position `delay`.
inline void add_fractional_impulse(std::vector<double>& h, double delay, double amp) {
  const auto center = static_cast<long>(std::lround(delay));
  const double half = kSincHalfWidth + 1.0;
  for (long n = center - kSincHalfWidth; n <= center + kSincHalfWidth; ++n) {
    if (n < 0 || n >= static_cast<long>(h.size())) continue;
    const double x = static_cast<double>(n) - delay;
    const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double win = std::abs(x) < half ? 0.5 * (1.0 + std::cos(std::numbers::pi * x / half)) : 0.0;
    h[static_cast<std::size_t>(n)] += amp * sinc * win;
  }
}

inline Waveform image_method_rir(const Room& room, const Vec3& src, const Vec3& mic, int order, double fs) {
  const auto images = image_sources(room, src, mic, order, fs);
  double max_delay = 0.0;
  for (const auto& im : images) max_delay = std::max(max_delay, im.delay);
  Waveform h;
  h.fs = fs;
  h.samples.assign(static_cast<std::size_t>(std::ceil(max_delay)) + kSincHalfWidth + 2, 0.0);
  for (const auto& im : images) add_fractional_impulse(h.samples, im.delay, im.amplitude);
  return h;
}

// ---------------------------------------------------------------------------
// Synthetic sources (stand-ins for recorded corpora)

/// Speech-like test signal: a glottal harmonic series with a drifting pitch,
/// two moving formants, a syllabic envelope and short pauses.
inline Waveform synth_speech(double duration_s, double fs, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<std::size_t>(duration_s * fs);
  Waveform w;
  w.fs = fs;
  w.samples.assign(n, 0.0);
  const double f0_base = 95.0 + 120.0 * u(rng);
  const double syll_rate = 3.0 + 2.5 * u(rng);
  const double f1 = 400.0 + 400.0 * u(rng), f2 = 1100.0 + 1200.0 * u(rng);
  const double vib = 0.3 + 0.7 * u(rng), phase0 = 2.0 * std::numbers::pi * u(rng);
  double ph = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f0 = f0_base * (1.0 + 0.12 * std::sin(2.0 * std::numbers::pi * vib * t + phase0));
    ph += 2.0 * std::numbers::pi * f0 / fs;
    const double env = std::pow(std::max(0.0, std::sin(std::numbers::pi * syll_rate * t + phase0)), 1.5);
    const double ff1 = f1 * (1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * 0.7 * t));
    const double ff2 = f2 * (1.0 + 0.15 * std::cos(2.0 * std::numbers::pi * 0.5 * t));
    double s = 0.0;
    for (int k = 1; f0 * k < 0.45 * fs && k <= 40; ++k) {
      const double fk = f0 * k;
      const double g1 = 1.0 / (1.0 + std::pow((fk - ff1) / 120.0, 2.0));
      const double g2 = 0.6 / (1.0 + std::pow((fk - ff2) / 180.0, 2.0));
      s += (g1 + g2 + 0.02) / std::sqrt(static_cast<double>(k)) * std::sin(k * ph);
    }
    w.samples[i] = 0.1 * env * s;
  }
  return w;
}

/// White, pink (Voss-McCartney) or babble noise.
inline Waveform synth_noise(NoiseKind kind, double duration_s, double fs, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(duration_s * fs);
  Waveform w;
  w.fs = fs;
  w.samples.assign(n, 0.0);
  std::mt19937_64 rng(seed ^ 0xa0a0ULL);
  std::normal_distribution<double> g(0.0, 1.0);
  switch (kind) {
    case NoiseKind::White:
      for (auto& s : w.samples) s = 0.1 * g(rng);
      break;
    case NoiseKind::Pink: {
      constexpr int kRows = 12;
      std::array<double, kRows> rows{};
      for (auto& r : rows) r = g(rng);
      double sum = 0.0;
      for (double r : rows) sum += r;
      for (std::size_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::uint64_t>(i + 1);
        const int k = std::countr_zero(idx);
        if (k < kRows) {
          sum -= rows[k];
          rows[k] = g(rng);
          sum += rows[k];
        }
        w.samples[i] = 0.03 * (sum + g(rng));
      }
      break;
    }
    case NoiseKind::Babble: {
      for (int talker = 0; talker < 5; ++talker) {
        const auto s = synth_speech(duration_s, fs, seed * 31 + static_cast<std::uint64_t>(talker) + 1);
        for (std::size_t i = 0; i < n; ++i) w.samples[i] += s.samples[i];
      }
      break;
    }
    case NoiseKind::File:
      throw Error("file noise must be loaded, not synthesized");
  }
  return w;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderedScene {
  std::vector<Waveform> mix;     // x_m
  std::vector<Waveform> speech;  // y_m = s * h_m
  std::vector<Waveform> noise;   // n_m (already SNR-scaled)
  Waveform target;               // clean target at the reference channel
  double noise_gain = 1.0;
};

inline double power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

inline RenderedScene render_scene(const SceneSpec& spec, const Waveform& speech, const std::vector<Waveform>& noises) {
  spec.validate();
  const double fs = speech.fs;
  CASNET_CHECK(static_cast<double>(speech.size()) >= fs, Error, "speech must be at least 1 s long");
  CASNET_CHECK(noises.size() == spec.noises.size(), Error, "need exactly one noise waveform per noise source");
  CASNET_CHECK(power(speech.samples) > 0.0, Error, "degenerate source: speech has zero power");
  const std::size_t len = speech.size(), M = spec.mics.size();

  RenderedScene out;
  out.speech.resize(M);
  out.noise.resize(M);
  out.mix.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto h = image_method_rir(spec.room, spec.source, spec.mics[m], spec.room.order, fs);
    out.speech[m] = Waveform{fft_convolve(speech.samples, h.samples, len), fs};
    out.noise[m] = Waveform{std::vector<double>(len, 0.0), fs};
  }
  for (std::size_t j = 0; j < noises.size(); ++j) {
    CASNET_CHECK(!noises[j].samples.empty(), Error, "noise waveform is empty");
    std::vector<double> looped(len);
    for (std::size_t i = 0; i < len; ++i) looped[i] = noises[j].samples[i % noises[j].size()];
    for (std::size_t m = 0; m < M; ++m) {
      const auto h = image_method_rir(spec.room, spec.noises[j].position, spec.mics[m], spec.room.order, fs);
      const auto part = fft_convolve(looped, h.samples, len);
      for (std::size_t i = 0; i < len; ++i) out.noise[m].samples[i] += part[i];
    }
  }
  const double ps = power(out.speech[0].samples), pn = power(out.noise[0].samples);
  CASNET_CHECK(pn > 0.0, Error, "degenerate noise: zero power at the reference channel");
  out.noise_gain = std::sqrt(ps / (pn * std::pow(10.0, spec.snr_db / 10.0)));
  for (std::size_t m = 0; m < M; ++m) {
    for (auto& v : out.noise[m].samples) v *= out.noise_gain;
    out.mix[m].fs = fs;
    out.mix[m].samples.resize(len);
    for (std::size_t i = 0; i < len; ++i) out.mix[m].samples[i] = out.speech[m].samples[i] + out.noise[m].samples[i];
  }
  if (spec.target == TargetMode::Reverberant) {
    out.target = out.speech[0];
  } else {
    const auto h = image_method_rir(spec.room, spec.source, spec.mics[0], 0, fs);
    out.target = Waveform{fft_convolve(speech.samples, h.samples, len), fs};
  }
  return out;
}

/// Synthesizes (or loads via `load`) the sources a spec refers to and
/// renders it. `load` maps a path to a waveform; it is only called for
/// file-backed sources.
template <class Loader>
RenderedScene render_scene(const SceneSpec& spec, double fs, Loader&& load) {
  const Waveform speech = spec.speech_path.empty() ? synth_speech(spec.duration_s, fs, spec.seed) : load(spec.speech_path);
  std::vector<Waveform> noises;
  for (std::size_t j = 0; j < spec.noises.size(); ++j) {
    const auto& n = spec.noises[j];
    noises.push_back(n.kind == NoiseKind::File ? load(n.path)
                                               : synth_noise(n.kind, spec.duration_s, fs, spec.seed * 1000003ULL + j));
  }
  return render_scene(spec, speech, noises);
}

inline RenderedScene render_scene(const SceneSpec& spec, double fs = 16000.0) {
  return render_scene(spec, fs, [](const std::string& p) -> Waveform {
    throw Error("scene refers to a file source (" + p + ") but no loader was given");
  });
}

/// Random shoebox scene: room 4-8 x 4-7 x 2.5-3.5 m, everything at least
/// 0.5 m from the walls, SNR as given.
inline SceneSpec random_scene(std::uint64_t seed, std::size_t num_mics, double snr_db, std::size_t num_noises = 1,
                              int order = 4, double absorption = 0.6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec s;
  s.seed = seed;
  s.snr_db = snr_db;
  s.room.dims = {4.0 + 4.0 * u(rng), 4.0 + 3.0 * u(rng), 2.5 + 1.0 * u(rng)};
  s.room.order = order;
  s.room.absorption = absorption;
  auto pick = [&] {
    Vec3 p;
    for (int i = 0; i < 3; ++i) p[i] = 0.5 + (s.room.dims[i] - 1.0) * u(rng);
    return p;
  };
  s.source = pick();
  for (std::size_t m = 0; m < num_mics; ++m) {
    Vec3 p;
    do {
      p = pick();
    } while (distance(p, s.source) < 0.3);
    s.mics.push_back(p);
  }
  const NoiseKind kinds[] = {NoiseKind::Pink, NoiseKind::White, NoiseKind::Babble};
  for (std::size_t j = 0; j < num_noises; ++j) s.noises.push_back(NoiseSpec{pick(), kinds[j % 3], {}});
  return s;
}

// ---------------------------------------------------------------------------
// Config (de)serialization

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::Babble: return "babble";
    case NoiseKind::File: return "file";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::White;
  if (s == "pink") return NoiseKind::Pink;
  if (s == "babble") return NoiseKind::Babble;
  if (s == "file") return NoiseKind::File;
  throw FormatError("unknown noise kind: " + s);
}

inline nlohmann::json to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["room"] = {{"dims", s.room.dims}, {"order", s.room.order}, {"absorption", s.room.absorption}, {"c", s.room.c}};
  j["source"] = s.source;
  j["mics"] = s.mics;
  j["noises"] = nlohmann::json::array();
  for (const auto& n : s.noises) {
    nlohmann::json jn{{"position", n.position}, {"kind", to_string(n.kind)}};
    if (n.kind == NoiseKind::File) jn["path"] = n.path;
    j["noises"].push_back(jn);
  }
  j["snr_db"] = s.snr_db;
  j["seed"] = s.seed;
  j["duration_s"] = s.duration_s;
  j["target"] = s.target == TargetMode::Reverberant ? "reverberant" : "direct-path";
  if (!s.speech_path.empty()) j["speech"] = s.speech_path;
  return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    const auto& r = j.at("room");
    s.room.dims = r.at("dims").get<Vec3>();
    s.room.order = r.value("order", s.room.order);
    s.room.absorption = r.value("absorption", s.room.absorption);
    s.room.c = r.value("c", s.room.c);
    s.source = j.at("source").get<Vec3>();
    s.mics = j.at("mics").get<std::vector<Vec3>>();
    for (const auto& jn : j.at("noises")) {
      NoiseSpec n;
      n.position = jn.at("position").get<Vec3>();
      n.kind = noise_kind_from_string(jn.value("kind", std::string("pink")));
      n.path = jn.value("path", std::string());
      CASNET_CHECK(n.kind != NoiseKind::File || !n.path.empty(), FormatError, "file noise needs a path");
      s.noises.push_back(n);
    }
    s.snr_db = j.value("snr_db", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    s.duration_s = j.value("duration_s", 4.0);
    const auto target = j.value("target", std::string("reverberant"));
    CASNET_CHECK(target == "reverberant" || target == "direct-path", FormatError, "unknown target mode: " + target);
    s.target = target == "reverberant" ? TargetMode::Reverberant : TargetMode::DirectPath;
    s.speech_path = j.value("speech", std::string());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid scene config: ") + e.what());
  }
}

}  // namespace casnet
