#pragma once

// Dataset directory format:
//   manifest.json  {format_version, seed, generator, record_counts}
//   train.jsonl, val.jsonl, test.jsonl, one sample per line.
// Feature values are written with 9 significant digits, which round-trips
// float32 exactly. Concept latents are doubles and use 17 digits.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trimodal/config.hpp"
#include "trimodal/error.hpp"
#include "trimodal/synth.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kSplitNames[3] = {"train", "val", "test"};

namespace io_detail {

inline void append_number(std::string& out, double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  out += buf;
}

inline void append_features(std::string& out, const FeatureSequence& s) {
  out += "{\"frames\":" + std::to_string(s.frames) + ",\"features\":" + std::to_string(s.features) + ",\"values\":[";
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (i) out += ',';
    append_number(out, static_cast<double>(s.values[i]), 9);
  }
  out += "]}";
}

inline std::string record_line(const TriModalSample& s, std::uint64_t seed) {
  std::string out = "{\"id\":" + std::to_string(s.id) + ",\"seed\":" + std::to_string(seed) +
                    ",\"concept_id\":" + std::to_string(s.concept_id) + ",\"variant\":" + std::to_string(s.variant) +
                    ",\"concept\":[";
  for (std::size_t i = 0; i < s.concept_latent.size(); ++i) {
    if (i) out += ',';
    append_number(out, s.concept_latent[i], 17);
  }
  out += "],\"motion\":";
  append_features(out, s.motion);
  out += ",\"text\":[";
  for (std::size_t i = 0; i < s.text.tokens.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.text.tokens[i]);
  }
  out += "],\"video\":";
  append_features(out, s.video);
  out += "}\n";
  return out;
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'");
  return *it;
}

template <typename Seq>
Seq read_features(const nlohmann::json& j, const char* name) {
  const auto& f = field(j, name);
  Seq s;
  s.frames = field(f, "frames").get<std::size_t>();
  s.features = field(f, "features").get<std::size_t>();
  for (double v : field(f, "values")) s.values.push_back(static_cast<float>(v));
  if (s.values.size() != s.frames * s.features)
    throw ParseError(std::string("field '") + name + "' has " + std::to_string(s.values.size()) + " values, expected " +
                     std::to_string(s.frames * s.features));
  return s;
}

inline std::vector<TriModalSample> read_split(const std::filesystem::path& file, std::uint64_t seed,
                                              std::size_t expected) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  std::vector<TriModalSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = file.filename().string() + " line " + std::to_string(line_no) + " (record " +
                              std::to_string(out.size()) + ")";
    TriModalSample s;
    std::uint64_t record_seed = 0;
    try {
      const auto j = nlohmann::json::parse(line);
      s.id = field(j, "id").get<std::uint64_t>();
      record_seed = field(j, "seed").get<std::uint64_t>();
      s.concept_id = field(j, "concept_id").get<int>();
      s.variant = field(j, "variant").get<int>();
      s.concept_latent = field(j, "concept").get<std::vector<double>>();
      s.motion = read_features<MotionSequence>(j, "motion");
      s.text.tokens = field(j, "text").get<std::vector<int>>();
      s.video = read_features<VideoSequence>(j, "video");
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (record_seed != seed)
      throw ParseError(where + ": record seed " + std::to_string(record_seed) + " does not match manifest seed " +
                       std::to_string(seed));
    out.push_back(std::move(s));
  }
  if (out.size() != expected)
    throw ParseError(file.filename().string() + ": " + std::to_string(out.size()) +
                     " records, manifest declares " + std::to_string(expected));
  return out;
}

}  // namespace io_detail

inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<TriModalSample>* splits[3] = {&d.train, &d.val, &d.test};
  nlohmann::json manifest = {{"format_version", kDatasetFormatVersion},
                             {"seed", d.config.seed},
                             {"generator", config_to_json(d.config)},
                             {"record_counts", {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}}}};
  for (int k = 0; k < 3; ++k) {
    std::ofstream out(dir / (std::string(kSplitNames[k]) + ".jsonl"), std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / kSplitNames[k]).string() + ".jsonl");
    for (const auto& s : *splits[k]) out << io_detail::record_line(s, d.config.seed);
  }
  std::ofstream m(dir / "manifest.json", std::ios::binary);
  if (!m) throw Error("cannot write " + (dir / "manifest.json").string());
  m << manifest.dump(2) << '\n';
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw ParseError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  Dataset d;
  std::size_t counts[3] = {0, 0, 0};
  try {
    manifest = nlohmann::json::parse(m);
    const int version = io_detail::field(manifest, "format_version").get<int>();
    if (version != kDatasetFormatVersion)
      throw ParseError("unsupported format_version " + std::to_string(version));
    d.config = generator_from_json(io_detail::field(manifest, "generator"));
    d.config.seed = io_detail::field(manifest, "seed").get<std::uint64_t>();
    const auto& rc = io_detail::field(manifest, "record_counts");
    for (int k = 0; k < 3; ++k) counts[k] = io_detail::field(rc, kSplitNames[k]).get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  } catch (const ParseError& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }
  std::vector<TriModalSample>* splits[3] = {&d.train, &d.val, &d.test};
  for (int k = 0; k < 3; ++k)
    *splits[k] = io_detail::read_split(dir / (std::string(kSplitNames[k]) + ".jsonl"), d.config.seed, counts[k]);
  return d;
}

}  // namespace trimodal
