#pragma once

// Checkpoint directory format:
//   manifest.json  {format_version, epoch, model, train, generator,
//                   tensors: [{name, shape, bytes, file}]}
//   tensors/<name>.bin  raw little-endian float32, row-major
// Loading rebuilds the architecture from the model config and then replaces
// every parameter, so a save/load round trip is bitwise exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "trimodal/config.hpp"
#include "trimodal/error.hpp"
#include "trimodal/model.hpp"
#include "trimodal/train.hpp"

namespace trimodal {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  Model<float> model;
  TrainConfig train;
  GeneratorConfig generator;
  std::size_t epoch = 0;  // epochs completed
};

namespace ckpt_detail {

inline std::vector<char> to_le_bytes(const std::vector<float>& v) {
  std::vector<char> out(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(v[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  return out;
}

inline std::vector<float> from_le_bytes(const std::vector<char>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

}  // namespace ckpt_detail

inline void save_checkpoint(Checkpoint& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::json tensors = nlohmann::json::array();
  for (auto& [name, t] : c.model.parameters()) {
    const std::string file = "tensors/" + name + ".bin";
    const auto bytes = ckpt_detail::to_le_bytes(t->values);
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / file).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    tensors.push_back({{"name", name}, {"shape", t->shape}, {"bytes", bytes.size()}, {"file", file}});
  }
  const nlohmann::json manifest = {{"format_version", kCheckpointFormatVersion},
                                   {"epoch", c.epoch},
                                   {"model", config_to_json(c.model.config)},
                                   {"train", config_to_json(c.train)},
                                   {"generator", config_to_json(c.generator)},
                                   {"tensors", tensors}};
  std::ofstream m(dir / "manifest.json", std::ios::binary);
  if (!m) throw Error("cannot write " + (dir / "manifest.json").string());
  m << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json");
  if (!m) throw ParseError("cannot open " + (dir / "manifest.json").string());
  try {
    const auto manifest = nlohmann::json::parse(m);
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw ParseError("unsupported checkpoint format_version " + std::to_string(version));
    Checkpoint c{Model<float>::init(config_from_json<ModelConfig>(manifest.at("model"))),
                 config_from_json<TrainConfig>(manifest.at("train")),
                 config_from_json<GeneratorConfig>(manifest.at("generator")), manifest.at("epoch").get<std::size_t>()};
    auto params = c.model.parameters();
    const auto& entries = manifest.at("tensors");
    if (entries.size() != params.size())
      throw ParseError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                       std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = entries[i];
      auto& [name, t] = params[i];
      if (e.at("name").get<std::string>() != name)
        throw ParseError("checkpoint tensor " + std::to_string(i) + " is '" + e.at("name").get<std::string>() +
                         "', expected '" + name + "'");
      const auto shape = e.at("shape").get<Shape>();
      const auto bytes = e.at("bytes").get<std::size_t>();
      if (shape != t->shape) throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(shape));
      if (bytes != 4 * shape_size(shape)) throw ParseError("checkpoint tensor '" + name + "' byte length mismatch");
      std::ifstream in(dir / e.at("file").get<std::string>(), std::ios::binary);
      if (!in) throw ParseError("cannot open tensor file for '" + name + "'");
      std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (data.size() != bytes)
        throw ParseError("tensor file for '" + name + "' has " + std::to_string(data.size()) + " bytes, expected " +
                         std::to_string(bytes));
      t->values = ckpt_detail::from_le_bytes(data);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace trimodal
