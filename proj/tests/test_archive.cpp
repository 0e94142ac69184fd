// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <filesystem>

#include "casnet/archive.hpp"
#include "casnet/model.hpp"
#include "test_util.hpp"

using namespace casnet;

namespace {

TensorArchive sample_archive() {
  TensorArchive a;
  a.meta = {{"format", 1}, {"note", "x"}};
  a.set("b.bias", {3}, {1.0f, -2.0f, 3.5f});
  a.set("a.weight", {2, 2}, {0.5f, -0.0f, 1e-30f, 7.0f});
  a.set("scalar", {}, {4.0f});
  return a;
}

}  // namespace

TEST(Archive, RoundTrip) {
  const auto a = sample_archive();
  const auto b = TensorArchive::from_bytes(a.to_bytes());
  EXPECT_EQ(b.meta, a.meta);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at("a.weight").data, a.at("a.weight").data);
  EXPECT_EQ(b.at("a.weight").shape, (std::vector<std::uint32_t>{2, 2}));
  EXPECT_EQ(b.at("scalar").data, std::vector<float>{4.0f});
  EXPECT_EQ(b.parameter_count(), 8u);
  EXPECT_EQ(b.to_bytes(), a.to_bytes());
}

TEST(Archive, DigestTracksContent) {
  auto a = sample_archive();
  const auto d0 = a.digest();
  EXPECT_EQ(sample_archive().digest(), d0);
  a.set("b.bias", {3}, {1.0f, -2.0f, 3.25f});
  EXPECT_NE(a.digest(), d0);
}

TEST(Archive, CorruptionAndTruncation) {
  const auto bytes = sample_archive().to_bytes();
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x10;
  EXPECT_THROW(TensorArchive::from_bytes(bad), FormatError);
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{8}, bytes.size() - 1})
    EXPECT_THROW(TensorArchive::from_bytes(std::span<const std::uint8_t>(bytes).first(n)), FormatError);
  bad = bytes;
  bad[0] = 'Z';
  EXPECT_THROW(TensorArchive::from_bytes(bad), FormatError);
}

TEST(Archive, ShapeCheckedAccess) {
  const auto a = sample_archive();
  EXPECT_EQ(a.get("a.weight", {2, 2}).size(), 4u);
  try {
    a.get("a.weight", {4});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("a.weight"), std::string::npos);
  }
  EXPECT_THROW(a.at("missing"), Error);
}

TEST(Archive, SaveLoadFile) {
  const auto path = (std::filesystem::temp_directory_path() / "casnet_archive_test.casw").string();
  sample_archive().save(path);
  EXPECT_EQ(TensorArchive::load(path).digest(), sample_archive().digest());
  std::filesystem::remove(path);
  EXPECT_THROW(TensorArchive::load(path), IoError);
}

TEST(Manifest, FrozenFixtureValidates) {
  const auto [w, cfg] = load_manifest(casnet::testing::data_path("weights_small.casw"));
  EXPECT_EQ(cfg.d, 4u);
  EXPECT_EQ(w.meta.at("format"), kManifestFormat);
  EXPECT_NO_THROW(validate_manifest(w, cfg));
}

TEST(Manifest, MissingTensorIsNamed) {
  const auto cfg = model_config_from_json(nlohmann::json::parse(R"({"d":4,"dpr_hidden":8})"));
  auto w = init_weights(cfg, 1);
  TensorArchive pruned;
  pruned.meta = w.meta;
  for (const auto& [name, t] : w.tensors())
    if (name != "fuse.dpr.inter.proj.weight") pruned.set(name, t.shape, t.data);
  try {
    validate_manifest(pruned, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("fuse.dpr.inter.proj.weight"), std::string::npos);
  }
}
