#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "trimodal/config.hpp"

using namespace trimodal;

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.generator.seed = 9;
  c.generator.motion_noise = 0.123;
  c.train.epochs = 7;
  c.train.decay_start_epoch = 3;
  c.train.fusion_mode = FusionMode::kSummed;
  c.train.modality_mode = ModalityMode::kTwoModal;
  c.train.adamw.beta2 = 0.98;
  c.protocol.subset_size = 16;
  const auto j = run_config_to_json(c);
  const auto back = run_config_from_json(j);
  EXPECT_EQ(run_config_to_json(back), j);
  EXPECT_EQ(back.train.fusion_mode, FusionMode::kSummed);
  EXPECT_EQ(back.train.adamw.beta2, 0.98);
  EXPECT_EQ(j["train"]["fusion_mode"], "summed");
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"train": {"epochs": 12}})"));
  EXPECT_EQ(c.train.epochs, 12u);
  EXPECT_EQ(c.train.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(c.generator.n_samples, GeneratorConfig{}.n_samples);
}

TEST(Config, UnknownKeysAreErrors) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"epoch": 12}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"optimizer": {}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"epochs": "many"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"fusion_mode": "mixed"}})")), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = fixtures::temp_dir("config_file");
  std::ofstream(dir / "c.json") << R"({"generator": {"n_concepts": 8}, "protocol": {"threshold": 0.5}})";
  const auto c = load_run_config((dir / "c.json").string());
  EXPECT_EQ(c.generator.n_concepts, 8u);
  EXPECT_EQ(c.protocol.threshold, 0.5);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_run_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_run_config((dir / "none.json").string()), ConfigError);
}

TEST(Overrides, DottedAndPlainKeys) {
  RunConfig c;
  apply_override(c, "train.epochs", "20");
  apply_override(c, "generator.n_concepts", "8");
  apply_override(c, "protocol.threshold", "0.6");
  apply_override(c, "lambda_recon", "0.5");
  apply_override(c, "fusion_mode", "summed");
  EXPECT_EQ(c.train.epochs, 20u);
  EXPECT_EQ(c.generator.n_concepts, 8u);
  EXPECT_EQ(c.protocol.threshold, 0.6);
  EXPECT_EQ(c.train.lambda_recon, 0.5);
  EXPECT_EQ(c.train.fusion_mode, FusionMode::kSummed);
}

TEST(Overrides, PlainKeyPrefersTrainSection) {
  RunConfig c;
  apply_override(c, "latent_dim", "16");
  EXPECT_EQ(c.train.latent_dim, 16u);
  EXPECT_EQ(c.generator.latent_dim, GeneratorConfig{}.latent_dim);
  apply_override(c, "generator.latent_dim", "24");
  EXPECT_EQ(c.generator.latent_dim, 24u);
}

TEST(Overrides, SeedSetsEverySection) {
  RunConfig c;
  apply_override(c, "seed", "42");
  EXPECT_EQ(c.generator.seed, 42u);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.protocol.seed, 42u);
}

TEST(Overrides, BadInputsAreErrors) {
  RunConfig c;
  EXPECT_THROW(apply_override(c, "epochz", "3"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.nope", "3"), ConfigError);
  EXPECT_THROW(apply_override(c, "model.epochs", "3"), ConfigError);
  EXPECT_THROW(apply_override(c, "epochs", "three"), ConfigError);
  EXPECT_THROW(apply_override(c, "epochs", "-1"), ConfigError);
  EXPECT_THROW(apply_override(c, "epsilon", "0.5x"), ConfigError);
}

TEST(Overrides, EveryListedKeyIsAccepted) {
  const auto keys = override_keys();
  EXPECT_GT(keys.size(), 30u);
  for (const auto& k : keys) {
    RunConfig c;
    const auto j = run_config_to_json(c);
    const auto dot = k.find('.');
    const auto& v = j[k.substr(0, dot)][k.substr(dot + 1)];
    const std::string text = v.is_string() ? v.get<std::string>() : v.dump();
    EXPECT_NO_THROW(apply_override(c, k, text)) << k;
    EXPECT_EQ(run_config_to_json(c), j) << k;
  }
}
