#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trimodal/error.hpp"

namespace trimodal {

enum class Modality { kText, kMotion, kVideo };

inline std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kMotion: return "motion";
    case Modality::kVideo: return "video";
  }
  return "unknown";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "motion") return Modality::kMotion;
  if (s == "video") return Modality::kVideo;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

// Row-major frames x features matrix of per-frame features.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t features = 0;
  std::vector<float> values;

  float at(std::size_t f, std::size_t c) const { return values[f * features + c]; }
  bool operator==(const FeatureSequence&) const = default;
};

// Pose features P (l_m x c_m).
struct MotionSequence : FeatureSequence {};
// Per-frame features of the sampled video frames (l_v x c_v).
struct VideoSequence : FeatureSequence {};

struct TextSequence {
  std::vector<int> tokens;
  bool operator==(const TextSequence&) const = default;
};

struct TriModalSample {
  std::uint64_t id = 0;
  int concept_id = 0;
  int variant = 0;
  std::vector<double> concept_latent;  // unit vector; the ground-truth label embedding
  MotionSequence motion;
  TextSequence text;
  VideoSequence video;

  bool operator==(const TriModalSample&) const = default;
};

// Dense N x dim matrix of embeddings (or label vectors) in double precision.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  const double* row(std::size_t i) const { return values.data() + i * dim; }
  double* row(std::size_t i) { return values.data() + i * dim; }
};

inline EmbeddingMatrix label_matrix(const std::vector<const TriModalSample*>& samples) {
  if (samples.empty()) throw ShapeError("label_matrix: no samples");
  EmbeddingMatrix m{samples.size(), samples[0]->concept_latent.size(), {}};
  for (const auto* s : samples) {
    if (s->concept_latent.size() != m.dim) throw ShapeError("label_matrix: inconsistent label width");
    m.values.insert(m.values.end(), s->concept_latent.begin(), s->concept_latent.end());
  }
  return m;
}

}  // namespace trimodal
