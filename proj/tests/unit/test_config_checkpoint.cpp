#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "rwgcn/checkpoint.hpp"
#include "rwgcn/config.hpp"
#include "rwgcn/errors.hpp"
#include "rwgcn/growing.hpp"
#include "test_util.hpp"

namespace rwgcn {
namespace {

using testing::random_tensor;

std::string fixture(const std::string& name) { return std::string(RWGCN_FIXTURE_DIR) + "/" + name; }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(KeyValueConfig, SectionsCommentsAndTypes) {
  const auto kv = KeyValueConfig::parse(
      "# top\ntop = 1\n[window]\nclip_len = 300 # trailing\nmode = \"SF # not a comment\"\n"
      "\n[noise]\nflag = true\nratio = 0.25\n");
  EXPECT_EQ(kv.get_size("top"), 1u);
  EXPECT_EQ(kv.get_size("window.clip_len"), 300u);
  EXPECT_EQ(kv.get_string("window.mode"), "SF # not a comment");
  EXPECT_EQ(kv.get_bool("noise.flag"), true);
  EXPECT_EQ(kv.get_double("noise.ratio"), 0.25);
  EXPECT_FALSE(kv.get_double("missing"));
  EXPECT_EQ(kv.values().size(), 5u);
}

TEST(KeyValueConfig, MalformedInputNamesLine) {
  try {
    KeyValueConfig::parse("a = 1\n[window\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("= 3\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a = \"open\n"), ConfigError);
}

TEST(KeyValueConfig, TypeErrors) {
  const auto kv = KeyValueConfig::parse("n = -3\ns = \"x\"\nb = maybe\n");
  EXPECT_THROW(kv.get_size("n"), ConfigError);
  EXPECT_THROW(kv.get_double("s"), ConfigError);
  EXPECT_THROW(kv.get_bool("b"), ConfigError);
}

TEST(EngineConfig, LoadsFixture) {
  const EngineConfig c = engine_config_from(KeyValueConfig::load(fixture("engine.toml")));
  EXPECT_EQ(c.window.clip_len, 8u);
  EXPECT_EQ(c.window.window_len, 4u);
  EXPECT_EQ(c.window.fps_in, 30.0);
  EXPECT_EQ(c.window.mode, Variant::Consensus);
  EXPECT_EQ(c.noise.seed, 7u);
  EXPECT_EQ(c.lambda.lambda, 1u);
  EXPECT_EQ(c.num_classes, 6u);
  EXPECT_EQ(c.max_persons, 2u);
  EXPECT_FALSE(c.checkpoint);
}

TEST(EngineConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(engine_config_from(KeyValueConfig::load(fixture("bad.toml"))), ConfigError);
  EXPECT_THROW(engine_config_from(KeyValueConfig::parse("[window]\nmode = \"bogus\"\n")),
               ConfigError);
  EXPECT_THROW(engine_config_from(KeyValueConfig::parse("[noise]\nspatial_drop_p = 2\n")),
               ConfigError);
  EXPECT_THROW(engine_config_from(KeyValueConfig::parse("[noise]\nlambda = 0\n")), ConfigError);
  EXPECT_THROW(engine_config_from(KeyValueConfig::parse("[window]\nclip_len = 10\nwindow_len = 3\n")),
               ConfigError);
  EXPECT_THROW(KeyValueConfig::load(fixture("missing.toml")), ConfigError);
}

TEST(EngineConfig, OverridesKeepBase) {
  EngineConfig base;
  base.num_classes = 9;
  const EngineConfig c =
      engine_config_from(KeyValueConfig::parse("[window]\nclip_len = 60\nwindow_len = 20\n"), base);
  EXPECT_EQ(c.num_classes, 9u);
  EXPECT_EQ(c.window.window_len, 20u);
}

NetworkConfig small_config(std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.blocks = compact_block_plan();
  cfg.num_classes = 5;
  cfg.seed = seed;
  return cfg;
}

TEST(Checkpoint, ByteExactRoundTripForEveryVariant) {
  for (Variant v : {Variant::Consensus, Variant::Semantic, Variant::Control, Variant::SemanticControl}) {
    Network net(small_config(3));
    grow_attach(net, v);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> dist(0.0, 0.3);
    for (auto& np : named_parameters(net))
      for (double& x : np.param->value.data()) x += dist(rng);
    const std::string bytes = checkpoint_bytes(net);
    ASSERT_EQ(bytes.substr(0, 8), "RWGCNCK1");
    Network loaded = network_from_checkpoint_bytes(bytes);
    EXPECT_EQ(checkpoint_bytes(loaded), bytes) << variant_name(v);
    EXPECT_EQ(loaded.feedback.variant, net.feedback.variant);

    const Tensor x = random_tensor({2, 2, 8, 18}, 5);
    EXPECT_EQ(network_forward(loaded, x).logits, network_forward(net, x).logits);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  Network net(small_config(6));
  const std::string path = temp_path("rwgcn_checkpoint_test.bin");
  save_checkpoint(net, path);
  Network loaded = load_checkpoint(path);
  EXPECT_EQ(checkpoint_bytes(loaded), checkpoint_bytes(net));
  std::remove(path.c_str());
}

TEST(Checkpoint, MalformedInputThrowsDataError) {
  Network net(small_config(7));
  const std::string bytes = checkpoint_bytes(net);
  EXPECT_THROW(network_from_checkpoint_bytes(""), DataError);
  EXPECT_THROW(network_from_checkpoint_bytes("NOTMAGIC" + bytes.substr(8)), DataError);
  EXPECT_THROW(network_from_checkpoint_bytes(bytes.substr(0, bytes.size() - 8)), DataError);
  EXPECT_THROW(network_from_checkpoint_bytes(bytes + "extra"), DataError);
  EXPECT_THROW(load_checkpoint(temp_path("rwgcn_no_such_checkpoint.bin")), DataError);
}

}  // namespace
}  // namespace rwgcn
