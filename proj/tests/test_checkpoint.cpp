#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mmui/checkpoint.hpp"

using namespace mmui;
namespace fs = std::filesystem;

namespace {

DetectorConfig small_config(FusionStrategy f = FusionStrategy::None, std::size_t xattn = 0) {
  DetectorConfig c;
  c.input_size = 64;
  c.channels = {4, 8, 8, 16};
  c.fusion = f;
  c.xattn_count = xattn;
  c.text_dim = 16;
  c.seed = 5;
  return c;
}

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / ("mmui_ckpt_" + name)).string(); }

bool bit_equal(const ParameterRegistry<float>& a, const ParameterRegistry<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& [na, ta] = a.entries()[k];
    const auto& [nb, tb] = b.entries()[k];
    if (na != nb || ta.shape() != tb.shape()) return false;
    if (std::memcmp(ta.data().data(), tb.data().data(), ta.numel() * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndUnknownKeys) {
  RunConfig c;
  c.model = small_config(FusionStrategy::WeightedSum, 4);
  c.data_dir = "data";
  c.epochs = 3;
  c.lr = 5e-4;
  c.seed = 17;
  c.text_dropout = 0.25;
  c.twin_abstain = true;
  const auto j = to_json(c);
  const auto back = run_config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.model.anchors, c.model.anchors);

  auto bad = nlohmann::json::parse(j.dump());
  bad["learning_rate"] = 0.1;
  try {
    run_config_from_json(bad, "cfg.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"fusion":"conv","xattn_count":0})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"epochs":"many"})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"fusion":"concat","xattn_count":3})")), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = build_model<float>(small_config(FusionStrategy::ConvFusion, 5));
  std::mt19937 rng(1);
  std::normal_distribution<float> n(0, 1);
  for (auto& [_, t] : m.params().entries()) {
    for (auto& v : t.data()) v = n(rng);
  }
  RunConfig rc;
  rc.epochs = 9;
  const auto path = tmp("roundtrip.ckpt");
  save_checkpoint(m, rc, path);
  const auto loaded = load_checkpoint<float>(path);
  EXPECT_TRUE(bit_equal(m.params(), loaded.model.params()));
  EXPECT_EQ(loaded.config.epochs, 9u);
  EXPECT_EQ(loaded.model.config().fusion, FusionStrategy::ConvFusion);
  EXPECT_EQ(encode_checkpoint(loaded.model, loaded.config), detail::read_file(path));
  fs::remove(path);
}

TEST(Checkpoint, EverySingleByteCorruptionIsDetected) {
  auto m = build_model<float>(small_config());
  const std::string bytes = encode_checkpoint(m, RunConfig{});
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::string bad = bytes;
    const std::size_t pos = rng() % bad.size();
    bad[pos] = static_cast<char>(bad[pos] ^ static_cast<char>(1 + rng() % 255));
    EXPECT_THROW(decode_checkpoint(bad, "x"), FormatError) << "byte " << pos;
  }
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 10), "x"), FormatError);
  EXPECT_THROW(load_checkpoint<float>(tmp("missing.ckpt")), FormatError);
}

TEST(Checkpoint, BaselineInitialisesSharedWeightsOfFusionModel) {
  auto base = build_model<float>(small_config());
  for (auto& [_, t] : base.params().entries()) {
    for (auto& v : t.data()) v += 0.25f;
  }
  const auto path = tmp("base.ckpt");
  save_checkpoint(base, RunConfig{}, path);
  TransferReport rep;
  auto fused = init_from_baseline<float>(path, small_config(FusionStrategy::ConvFusion, 3), &rep);
  EXPECT_TRUE(fused.baseline_initialized());
  EXPECT_EQ(rep.copied.size(), base.params().size());
  EXPECT_TRUE(rep.ignored.empty());
  ASSERT_FALSE(rep.initialized.empty());
  for (const auto& name : rep.initialized) EXPECT_EQ(name.rfind("xattn", 0), 0u) << name;
  for (const auto& name : rep.copied) {
    const auto& a = *base.params().find(name);
    const auto& b = *fused.params().find(name);
    EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)), 0) << name;
  }
  // Fresh cross-attention parameters match a freshly built fusion model.
  auto fresh = build_model<float>(small_config(FusionStrategy::ConvFusion, 3));
  for (const auto& name : rep.initialized) {
    const auto& a = *fresh.params().find(name);
    const auto& b = *fused.params().find(name);
    EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)), 0) << name;
  }

  const auto fpath = tmp("fused.ckpt");
  save_checkpoint(fused, RunConfig{}, fpath);
  EXPECT_THROW(init_from_baseline<float>(fpath, small_config(FusionStrategy::ConvFusion, 3)), UsageError);
  auto other = small_config(FusionStrategy::ConvFusion, 3);
  other.num_classes = 23;
  EXPECT_THROW(init_from_baseline<float>(path, other), ShapeError);
  fs::remove(path);
  fs::remove(fpath);
}
