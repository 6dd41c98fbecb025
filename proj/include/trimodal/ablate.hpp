#pragma once

// One-dimensional hyperparameter sweeps: train once per value from the same
// base config and dataset, then score text->motion and video->motion on the
// test split under the "all" protocol.

#include <string>
#include <string_view>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/report.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/synth.hpp"
#include "trimodal/train.hpp"

namespace trimodal {

enum class AblationDimension { kEpsilon, kLambdaRecon, kBatchSize, kLatentDim };

inline std::string_view ablation_dimension_name(AblationDimension d) {
  switch (d) {
    case AblationDimension::kEpsilon: return "epsilon";
    case AblationDimension::kLambdaRecon: return "lambda_recon";
    case AblationDimension::kBatchSize: return "batch_size";
    case AblationDimension::kLatentDim: return "latent_dim";
  }
  return "?";
}

inline AblationDimension parse_ablation_dimension(std::string_view s) {
  if (s == "epsilon") return AblationDimension::kEpsilon;
  if (s == "lambda_recon") return AblationDimension::kLambdaRecon;
  if (s == "batch_size") return AblationDimension::kBatchSize;
  if (s == "latent_dim") return AblationDimension::kLatentDim;
  throw ConfigError("unknown ablation dimension '" + std::string(s) +
                    "' (expected epsilon, lambda_recon, batch_size or latent_dim)");
}

inline TrainConfig with_value(TrainConfig c, AblationDimension d, double v) {
  auto as_count = [&](const char* what) {
    if (!(v >= 1) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw ConfigError(std::string(what) + " values must be positive integers");
    return static_cast<std::size_t>(v);
  };
  switch (d) {
    case AblationDimension::kEpsilon: c.epsilon = v; break;
    case AblationDimension::kLambdaRecon: c.lambda_recon = v; break;
    case AblationDimension::kBatchSize: c.batch_size = as_count("batch_size"); break;
    case AblationDimension::kLatentDim: c.latent_dim = as_count("latent_dim"); break;
  }
  c.validate();
  return c;
}

struct AblationRow {
  double value = 0;
  RetrievalReport text_to_motion;
  RetrievalReport video_to_motion;
};

struct AblationResult {
  AblationDimension dimension = AblationDimension::kEpsilon;
  std::vector<AblationRow> rows;
};

inline AblationRow train_and_score(const Dataset& data, const TrainConfig& cfg, double value) {
  TrainResult r = train(data, cfg);
  const auto test = pointers(data.test);
  ProtocolConfig pc;
  pc.seed = cfg.seed;
  return AblationRow{value, evaluate(r.model, test, Modality::kText, Modality::kMotion, Protocol::kAll, pc),
                     evaluate(r.model, test, Modality::kVideo, Modality::kMotion, Protocol::kAll, pc)};
}

inline AblationResult ablate(AblationDimension d, const std::vector<double>& values, const TrainConfig& base,
                             const Dataset& data) {
  if (values.empty()) throw ConfigError("ablate: no values given");
  std::vector<TrainConfig> configs;
  for (double v : values) configs.push_back(with_value(base, d, v));  // validate every value before training
  AblationResult res{d, {}};
  for (std::size_t i = 0; i < values.size(); ++i) res.rows.push_back(train_and_score(data, configs[i], values[i]));
  return res;
}

inline std::string ablation_table(const AblationResult& a) {
  const std::string name(ablation_dimension_name(a.dimension));
  const std::size_t w0 = std::max<std::size_t>(name.size(), 8) + 2;
  std::string out = std::string(w0, ' ') + pad("text->motion", 32) + pad("video->motion", 32) + "\n";
  out += pad(name, w0);
  for (int rep = 0; rep < 2; ++rep)
    for (const char* h : {"R@1", "R@2", "R@3", "MedR"}) out += pad(h, 8);
  out += "\n";
  for (const auto& row : a.rows) {
    out += pad(format_number(row.value), w0);
    for (const auto* r : {&row.text_to_motion, &row.video_to_motion}) {
      for (int k : {1, 2, 3}) out += pad(fixed(r->recall_at(k), 2), 8);
      out += pad(fixed(r->medr, 1), 8);
    }
    out += "\n";
  }
  return out;
}

inline std::string ablation_csv(const AblationResult& a) {
  std::string out = std::string(ablation_dimension_name(a.dimension)) +
                    ",t2m_R@1,t2m_R@2,t2m_R@3,t2m_MedR,v2m_R@1,v2m_R@2,v2m_R@3,v2m_MedR\n";
  for (const auto& row : a.rows) {
    out += exact_number(row.value);
    for (const auto* r : {&row.text_to_motion, &row.video_to_motion}) {
      for (int k : {1, 2, 3}) out += "," + exact_number(r->recall_at(k));
      out += "," + exact_number(r->medr);
    }
    out += "\n";
  }
  return out;
}

}  // namespace trimodal
