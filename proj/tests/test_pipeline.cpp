// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include "casnet/pipeline.hpp"
#include "casnet/scene.hpp"
#include "test_util.hpp"

using namespace casnet;
using casnet::testing::max_abs_diff;
using casnet::testing::small_config;
using casnet::testing::small_weights;

namespace {

std::vector<Waveform> scene_mics(std::size_t M, std::uint64_t seed, double seconds = 1.0) {
  SceneSpec spec = random_scene(seed, M, 0.0);
  spec.duration_s = seconds;
  return render_scene(spec).mix;
}

PipelineOptions compressed(std::size_t rank) {
  PipelineOptions o;
  o.rank = rank;
  return o;
}

double peak(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST(Pipeline, FullRankMatchesRawTransport) {
  const auto mics = scene_mics(3, 1);
  PipelineOptions raw;
  raw.mode = TransportMode::Raw;
  const auto a = enhance(mics, small_weights(), small_config(), raw);
  const auto b = enhance(mics, small_weights(), small_config(), compressed(4));
  ASSERT_EQ(a.output.size(), b.output.size());
  EXPECT_LT(max_abs_diff(a.output.samples, b.output.samples), 1e-5 * std::max(1.0, peak(a.output.samples)));
  EXPECT_FALSE(a.nsa.has_value());
  ASSERT_TRUE(b.nsa.has_value());
  EXPECT_EQ(b.link.sent, 2 * a.compressed_mag.rows());
  EXPECT_EQ(b.link.accepted, b.link.sent);
}

TEST(Pipeline, OutputLengthMatchesInput) {
  for (double sec : {1.0, 1.53}) {
    const auto mics = scene_mics(2, 2, sec);
    const auto r = enhance(mics, small_weights(), small_config(), compressed(2));
    EXPECT_EQ(r.output.size(), mics[0].size());
    EXPECT_EQ(r.output.fs, 16000.0);
  }
}

TEST(Pipeline, ReportsNsa) {
  const auto mics = scene_mics(2, 3);
  for (std::size_t a : {1u, 2u, 4u}) {
    const auto r = enhance(mics, small_weights(), small_config(), compressed(a));
    const std::size_t T = r.compressed_mag.rows();
    EXPECT_EQ(r.nsa->total_samples_sent, T * (4 + 32) * a);
    EXPECT_DOUBLE_EQ(r.nsa->nsa, double(T * 36 * a) / double(mics[0].size()));
    EXPECT_DOUBLE_EQ(r.nsa->asymptotic, 36.0 * double(a) / 256.0);
  }
}

TEST(Pipeline, TotalLossStillProducesOutput) {
  const auto mics = scene_mics(4, 4);
  auto opt = compressed(2);
  opt.channel.drop_prob = 1.0;
  const auto r = enhance(mics, small_weights(), small_config(), opt);
  EXPECT_EQ(r.link.accepted, 0u);
  EXPECT_EQ(r.link.lost, r.link.sent);
  for (double v : r.output.samples) ASSERT_TRUE(std::isfinite(v));
  EXPECT_GT(peak(r.output.samples), 0.0);
}

TEST(Pipeline, LateFramesAreCounted) {
  const auto mics = scene_mics(3, 5);
  auto opt = compressed(2);
  opt.channel.max_delay_frames = 5;  // b + c = 2
  opt.channel.jitter_seed = 9;
  const auto r = enhance(mics, small_weights(), small_config(), opt);
  EXPECT_GT(r.link.late, 0u);
  EXPECT_EQ(r.link.accepted + r.link.late + r.link.corrupt, r.link.sent);
  EXPECT_EQ(r.link.lost, r.link.sent - r.link.accepted);
}

TEST(Pipeline, AnyArraySize) {
  for (std::size_t M = 1; M <= 12; ++M) {
    const auto mics = scene_mics(M, 100 + M);
    const auto r = enhance(mics, small_weights(), small_config(), compressed(2));
    EXPECT_EQ(r.output.size(), mics[0].size()) << "M=" << M;
    EXPECT_EQ(r.link.sent, (M - 1) * r.compressed_mag.rows());
    for (double v : r.output.samples) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Pipeline, DeterministicWithLossyChannel) {
  const auto mics = scene_mics(4, 6);
  auto opt = compressed(3);
  opt.channel = ChannelModel{0.3, 2, 17};
  const auto a = enhance(mics, small_weights(), small_config(), opt);
  opt.parallel = false;
  const auto b = enhance(mics, small_weights(), small_config(), opt);
  EXPECT_EQ(a.output.samples, b.output.samples);
  EXPECT_EQ(a.link.accepted, b.link.accepted);
}

TEST(Pipeline, EndToEndCausal) {
  const auto cfg = small_config();
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto mics = scene_mics(3, 200 + trial);
    const std::size_t k0 = 20 + 7 * trial;  // first frame allowed to change
    auto future = mics;
    const std::size_t start = k0 * 256 + 256;  // frames < k0 end before this sample
    for (auto& m : future)
      for (std::size_t i = start; i < m.size(); ++i) m.samples[i] += 0.5 * std::sin(0.01 * double(i));
    auto opt = compressed(2);
    opt.channel = ChannelModel{0.2, 1, trial};
    const auto a = enhance(mics, small_weights(), cfg, opt);
    const auto b = enhance(future, small_weights(), cfg, opt);
    for (std::size_t k = 0; k < k0; ++k)
      for (std::size_t f = 0; f < a.compressed_mag.cols(); ++f)
        ASSERT_EQ(a.compressed_mag(k, f), b.compressed_mag(k, f)) << "frame " << k;
    // one frame of reconstruction lookahead
    for (std::size_t n = 0; n < (k0 - 1) * 256; ++n)
      ASSERT_NEAR(a.output.samples[n], b.output.samples[n], 1e-12) << "sample " << n;
  }
}

TEST(Pipeline, ReplayMatchesLiveRun) {
  const auto cfg = small_config();
  const auto mics = scene_mics(3, 7);
  auto opt = compressed(2);
  opt.channel = ChannelModel{0.2, 2, 33};
  const auto live = enhance(mics, small_weights(), cfg, opt);

  const auto arr = encode_array(mics, small_weights(), cfg, opt.stft, false);
  std::vector<Packet> arrivals;
  for (std::size_t m = 1; m < mics.size(); ++m) {
    ChannelModel ch = opt.channel;
    ch.jitter_seed += m;
    const auto got = channel_apply(node_send(arr.enc[m].h, static_cast<std::uint16_t>(m), 2), ch);
    arrivals.insert(arrivals.end(), got.begin(), got.end());
  }
  const auto replay = enhance_from_packets(mics[0], arrivals, 2, small_weights(), cfg);
  EXPECT_EQ(replay.output.samples, live.output.samples);
  EXPECT_EQ(replay.link.accepted, live.link.accepted);
}

TEST(Pipeline, CorruptPacketsAreSkipped) {
  const auto cfg = small_config();
  const auto h = casnet::testing::random_tensor(cfg.d, 5, cfg.f_prime, 1);
  auto packets = node_send(h, 1, 2);
  packets[1].bytes[40] ^= 0x01;
  packets[2].bytes[6] = 9;  // unknown node id
  LinkStats st;
  const auto nodes = receive_frames(packets, 1, 5, cfg, &st);
  EXPECT_EQ(st.corrupt, 2u);
  EXPECT_EQ(st.accepted, 3u);
  EXPECT_EQ(nodes[0].arrival[1], kNeverArrives);
  EXPECT_EQ(nodes[0].arrival[3], 3);
}

TEST(Pipeline, FeatureMseNonIncreasingInRank) {
  std::vector<Tensor3> feats;
  for (std::uint64_t s = 0; s < 3; ++s) feats.push_back(casnet::testing::random_tensor(16, 10, 32, s));
  double prev = 1e300;
  for (std::size_t a = 1; a <= 16; ++a) {
    const double mse = feature_mse(feats, a);
    EXPECT_LE(mse, prev * (1.0 + 1e-9) + 1e-12);
    prev = mse;
  }
  EXPECT_LT(prev, 1e-12);
}

TEST(Pipeline, InputErrors) {
  auto mics = scene_mics(2, 8);
  mics[1].samples.pop_back();
  EXPECT_THROW(enhance(mics, small_weights(), small_config()), ShapeError);
  EXPECT_THROW(enhance({}, small_weights(), small_config()), Error);
  mics = scene_mics(2, 8);
  EXPECT_THROW(enhance(mics, small_weights(), small_config(), compressed(5)), Error);
}
