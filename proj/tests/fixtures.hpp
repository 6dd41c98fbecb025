#pragma once

// Small configurations shared by the unit tests.

#include <cstdint>
#include <filesystem>
#include <string>

#include "trimodal/model.hpp"
#include "trimodal/synth.hpp"
#include "trimodal/train.hpp"

namespace fixtures {

inline trimodal::GeneratorConfig tiny_generator(std::uint64_t seed, std::size_t n = 24) {
  trimodal::GeneratorConfig g;
  g.seed = seed;
  g.n_samples = n;
  g.n_concepts = 4;
  g.latent_dim = 8;
  g.vocab_size = 16;
  g.texts_per_concept = 2;
  g.motion_len_min = 3;
  g.motion_len_max = 5;
  g.motion_features = 4;
  g.video_features = 5;
  g.frames_per_video = 3;
  g.phrase_len_min = 2;
  g.phrase_len_max = 3;
  g.n_train = n - 8;
  g.n_val = 4;
  g.n_test = 4;
  return g;
}

inline trimodal::TransformerShape tiny_shape(std::size_t dim = 8) { return {dim, 2, 2, 2 * dim}; }

inline trimodal::TrainConfig tiny_train(std::uint64_t seed, std::size_t epochs = 2) {
  trimodal::TrainConfig t;
  t.seed = seed;
  t.epochs = epochs;
  t.decay_start_epoch = epochs / 2;
  t.batch_size = 4;
  t.latent_dim = 8;
  t.heads = 2;
  t.layers = 1;
  return t;
}

inline trimodal::Model<double> tiny_model(const trimodal::GeneratorConfig& g, std::uint64_t seed,
                                          trimodal::FusionMode mode = trimodal::FusionMode::kJoint) {
  auto c = trimodal::ModelConfig::for_data(g, tiny_shape());
  c.init_seed = seed;
  c.fusion_mode = mode;
  return trimodal::Model<double>::init(c);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("trimodal_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
