#pragma once

// JSON mapping for GeneratorConfig, TrainConfig and ProtocolConfig, and the
// "--key value" override rules used by the command line.
//
// Each config struct exposes its fields through visit_fields, so serialization,
// parsing and overrides share one field table. A run config file looks like
//   {"generator": {...}, "train": {...}, "protocol": {...}}
// with every section and field optional. Overrides accept "section.key" or a
// plain key; a plain key resolves to the first section that has it, searched
// in the order train, generator, protocol. The plain key "seed" sets all three.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "trimodal/alignment.hpp"
#include "trimodal/error.hpp"
#include "trimodal/fusion.hpp"
#include "trimodal/model.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/synth.hpp"
#include "trimodal/train.hpp"

namespace trimodal {

template <typename F>
void visit_fields(GeneratorConfig& c, F&& f) {
  f("seed", c.seed);
  f("n_samples", c.n_samples);
  f("n_concepts", c.n_concepts);
  f("latent_dim", c.latent_dim);
  f("vocab_size", c.vocab_size);
  f("texts_per_concept", c.texts_per_concept);
  f("variant_spread", c.variant_spread);
  f("motion_len_min", c.motion_len_min);
  f("motion_len_max", c.motion_len_max);
  f("motion_features", c.motion_features);
  f("video_features", c.video_features);
  f("frames_per_video", c.frames_per_video);
  f("phrase_len_min", c.phrase_len_min);
  f("phrase_len_max", c.phrase_len_max);
  f("motion_noise", c.motion_noise);
  f("video_noise", c.video_noise);
  f("text_substitution", c.text_substitution);
  f("train_fraction", c.train_fraction);
  f("val_fraction", c.val_fraction);
  f("n_train", c.n_train);
  f("n_val", c.n_val);
  f("n_test", c.n_test);
}

template <typename F>
void visit_fields(TrainConfig& c, F&& f) {
  f("seed", c.seed);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("latent_dim", c.latent_dim);
  f("layers", c.layers);
  f("heads", c.heads);
  f("ffn_dim", c.ffn_dim);
  f("epsilon", c.epsilon);
  f("lambda_recon", c.lambda_recon);
  f("lr_start", c.lr_start);
  f("lr_end", c.lr_end);
  f("decay_start_epoch", c.decay_start_epoch);
  f("fusion_mode", c.fusion_mode);
  f("fusion_heads", c.fusion_heads);
  f("modality_mode", c.modality_mode);
  f("beta1", c.adamw.beta1);
  f("beta2", c.adamw.beta2);
  f("adam_eps", c.adamw.eps);
  f("weight_decay", c.adamw.weight_decay);
  f("feature_noise", c.feature_noise);
}

template <typename F>
void visit_fields(ProtocolConfig& c, F&& f) {
  f("seed", c.seed);
  f("threshold", c.threshold);
  f("subset_size", c.subset_size);
  f("batch_size", c.batch_size);
  f("repetitions", c.repetitions);
}

template <typename F>
void visit_fields(ModelConfig& c, F&& f) {
  f("latent_dim", c.encoder.transformer.dim);
  f("heads", c.encoder.transformer.heads);
  f("layers", c.encoder.transformer.layers);
  f("ffn_dim", c.encoder.transformer.ffn_dim);
  f("motion_features", c.encoder.motion_features);
  f("video_features", c.encoder.video_features);
  f("vocab_size", c.encoder.vocab_size);
  f("max_motion_len", c.encoder.max_motion_len);
  f("max_text_len", c.encoder.max_text_len);
  f("frames_per_video", c.encoder.frames_per_video);
  f("fusion_mode", c.fusion_mode);
  f("fusion_heads", c.fusion_heads);
  f("init_seed", c.init_seed);
}

namespace config_detail {

inline void to_json_value(nlohmann::json& j, FusionMode v) { j = std::string(fusion_mode_name(v)); }
inline void to_json_value(nlohmann::json& j, ModalityMode v) { j = std::string(modality_mode_name(v)); }
template <typename V>
void to_json_value(nlohmann::json& j, const V& v) {
  j = v;
}

template <typename V>
void from_json_value(const nlohmann::json& j, V& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<V, FusionMode>) {
      v = parse_fusion_mode(j.get<std::string>());
    } else if constexpr (std::is_same_v<V, ModalityMode>) {
      v = parse_modality_mode(j.get<std::string>());
    } else if constexpr (std::is_integral_v<V>) {
      if (!j.is_number_unsigned()) throw ConfigError("expected a nonnegative integer");
      v = j.get<V>();
    } else {
      if (!j.is_number()) throw ConfigError("expected a number");
      v = j.get<V>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

template <typename V>
void from_string(std::string_view text, V& v, const std::string& key) {
  auto fail = [&] { throw ConfigError("invalid value '" + std::string(text) + "' for --" + key); };
  if constexpr (std::is_same_v<V, FusionMode>) {
    v = parse_fusion_mode(text);
  } else if constexpr (std::is_same_v<V, ModalityMode>) {
    v = parse_modality_mode(text);
  } else {
    V parsed{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), parsed);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) fail();
    v = parsed;
  }
}

}  // namespace config_detail

template <typename Config>
nlohmann::json config_to_json(Config c) {
  nlohmann::json j = nlohmann::json::object();
  visit_fields(c, [&](const char* name, auto& v) { config_detail::to_json_value(j[name], v); });
  return j;
}

// Fields absent from the JSON keep their values in base; unknown keys are errors.
template <typename Config>
Config config_from_json(const nlohmann::json& j, Config base = {}) {
  if (!j.is_object()) throw ConfigError("config section must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    visit_fields(base, [&](const char* name, auto&) { known = known || key == name; });
    if (!known) throw ConfigError("unknown config field '" + key + "'");
  }
  visit_fields(base, [&](const char* name, auto& v) {
    if (auto it = j.find(name); it != j.end()) config_detail::from_json_value(*it, v, name);
  });
  return base;
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) { return config_from_json<GeneratorConfig>(j); }

struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;
  ProtocolConfig protocol;
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"generator", config_to_json(c.generator)},
          {"train", config_to_json(c.train)},
          {"protocol", config_to_json(c.protocol)}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (key != "generator" && key != "train" && key != "protocol")
      throw ConfigError("unknown config section '" + key + "'");
  if (auto it = j.find("generator"); it != j.end()) base.generator = config_from_json(*it, base.generator);
  if (auto it = j.find("train"); it != j.end()) base.train = config_from_json(*it, base.train);
  if (auto it = j.find("protocol"); it != j.end()) base.protocol = config_from_json(*it, base.protocol);
  return base;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

namespace config_detail {

template <typename Config>
bool set_field(Config& c, std::string_view key, std::string_view value) {
  bool found = false;
  visit_fields(c, [&](const char* name, auto& v) {
    if (key == name) {
      from_string(value, v, std::string(key));
      found = true;
    }
  });
  return found;
}

template <typename Config>
bool has_field(Config c, std::string_view key) {
  bool found = false;
  visit_fields(c, [&](const char* name, auto&) { found = found || key == name; });
  return found;
}

}  // namespace config_detail

// Applies one override. Throws ConfigError for unknown keys or bad values.
inline void apply_override(RunConfig& c, std::string_view key, std::string_view value) {
  using config_detail::set_field;
  if (const auto dot = key.find('.'); dot != std::string_view::npos) {
    const auto section = key.substr(0, dot), field = key.substr(dot + 1);
    bool ok = false;
    if (section == "generator") ok = set_field(c.generator, field, value);
    else if (section == "train") ok = set_field(c.train, field, value);
    else if (section == "protocol") ok = set_field(c.protocol, field, value);
    if (!ok) throw ConfigError("unknown option --" + std::string(key));
    return;
  }
  if (key == "seed") {
    set_field(c.generator, key, value);
    set_field(c.train, key, value);
    set_field(c.protocol, key, value);
    return;
  }
  if (set_field(c.train, key, value) || set_field(c.generator, key, value) || set_field(c.protocol, key, value))
    return;
  throw ConfigError("unknown option --" + std::string(key));
}

// Every key accepted by apply_override, in dotted form.
inline std::vector<std::string> override_keys() {
  std::vector<std::string> keys;
  RunConfig c;
  visit_fields(c.generator, [&](const char* n, auto&) { keys.push_back(std::string("generator.") + n); });
  visit_fields(c.train, [&](const char* n, auto&) { keys.push_back(std::string("train.") + n); });
  visit_fields(c.protocol, [&](const char* n, auto&) { keys.push_back(std::string("protocol.") + n); });
  return keys;
}

}  // namespace trimodal
