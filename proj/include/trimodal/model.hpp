#pragma once

// The full tri-modal model: three encoders, fusion, decoder and the learnable
// temperature, plus the batch objective
//   L = L_align + lambda_recon * L_recon.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "trimodal/alignment.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/fusion.hpp"
#include "trimodal/nn.hpp"
#include "trimodal/synth.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

inline constexpr double kInitTemperature = 0.07;

struct ModelConfig {
  EncoderConfig encoder;
  FusionMode fusion_mode = FusionMode::kJoint;
  std::size_t fusion_heads = 1;
  std::uint64_t init_seed = 0;

  std::size_t latent_dim() const { return encoder.transformer.dim; }

  void validate() const {
    encoder.validate();
    if (fusion_heads == 0 || latent_dim() % fusion_heads != 0)
      throw ConfigError("fusion head count must divide the latent dim");
  }

  // Input widths and length limits taken from a generator config.
  static ModelConfig for_data(const GeneratorConfig& g, const TransformerShape& t) {
    ModelConfig m;
    m.encoder.transformer = t;
    m.encoder.motion_features = g.motion_features;
    m.encoder.video_features = g.video_features;
    m.encoder.vocab_size = g.vocab_size;
    m.encoder.max_motion_len = g.motion_len_max;
    m.encoder.max_text_len = g.max_text_len();
    m.encoder.frames_per_video = g.frames_per_video;
    return m;
  }
};

template <typename T>
struct Model {
  ModelConfig config;
  MotionEncoder<T> motion;
  TextEncoder<T> text;
  VideoEncoder<T> video;
  FusionParams<T> fusion;
  MotionDecoder<T> decoder;
  Tensor<T> log_temperature;  // 1 x 1

  static Model init(const ModelConfig& c) {
    c.validate();
    Model m;
    m.config = c;
    SplitMix64 r_motion = stream(c.init_seed, "init.motion");
    SplitMix64 r_text = stream(c.init_seed, "init.text");
    SplitMix64 r_video = stream(c.init_seed, "init.video");
    SplitMix64 r_fusion = stream(c.init_seed, "init.fusion");
    SplitMix64 r_decoder = stream(c.init_seed, "init.decoder");
    m.motion = MotionEncoder<T>::init(c.encoder, r_motion);
    m.text = TextEncoder<T>::init(c.encoder, r_text);
    m.video = VideoEncoder<T>::init(c.encoder, r_video);
    m.fusion = FusionParams<T>::init(c.latent_dim(), c.fusion_heads, c.fusion_mode, r_fusion);
    m.decoder = MotionDecoder<T>::init(c.encoder.transformer, c.encoder.max_motion_len, c.encoder.motion_features,
                                       r_decoder);
    m.log_temperature = filled_tensor<T>(1, 1, static_cast<T>(std::log(kInitTemperature)));
    return m;
  }

  // Every parameter with a stable dotted name, in a fixed order.
  ParamList<T> parameters() {
    ParamList<T> out;
    motion.collect("motion", out);
    text.collect("text", out);
    video.collect("video", out);
    fusion.collect("fusion", out);
    decoder.collect("decoder", out);
    out.emplace_back("log_temperature", &log_temperature);
    return out;
  }

  void zero_grad() {
    for (auto& [name, p] : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& [name, p] : parameters()) n += p->size();
    return n;
  }
};

// Same architecture and values in another scalar type.
template <typename U, typename T>
Model<U> cast_model(Model<T>& src) {
  Model<U> dst = Model<U>::init(src.config);
  auto from = src.parameters();
  auto to = dst.parameters();
  for (std::size_t i = 0; i < from.size(); ++i) {
    auto& s = *from[i].second;
    auto& d = *to[i].second;
    d.shape = s.shape;
    d.values.assign(s.values.begin(), s.values.end());
    d.grad.clear();
  }
  return dst;
}

// Per-sample encodings stacked into B x C.
template <typename T>
Var<T> encode_batch(Graph<T>& g, Model<T>& m, const std::vector<const TriModalSample*>& batch, Modality modality) {
  if (batch.empty()) throw ShapeError("encode_batch: empty batch");
  std::vector<Var<T>> rows;
  rows.reserve(batch.size());
  for (const auto* s : batch) {
    switch (modality) {
      case Modality::kMotion: rows.push_back(m.motion.encode(g, s->motion)); break;
      case Modality::kText: rows.push_back(m.text.encode(g, s->text)); break;
      case Modality::kVideo: rows.push_back(m.video.encode(g, s->video)); break;
    }
  }
  return rows.size() == 1 ? rows[0] : ad::concat(std::span<const Var<T>>(rows), 0);
}

struct LossConfig {
  double epsilon = 0.8;
  double lambda_recon = 0.1;
  ModalityMode modality_mode = ModalityMode::kThreeModal;
};

template <typename T>
struct BatchLoss {
  Var<T> total;
  LossBreakdown breakdown;
  std::vector<ModalityWeights> weights;
};

template <typename T>
BatchLoss<T> total_loss(Graph<T>& g, Model<T>& m, const std::vector<const TriModalSample*>& batch,
                        const LossConfig& lc) {
  if (!(lc.lambda_recon >= 0)) throw ConfigError("lambda_recon must be >= 0");
  const SimilarityMatrix target = build_target_matrix(label_matrix(batch), lc.epsilon);
  const bool three = lc.modality_mode == ModalityMode::kThreeModal;

  Var<T> e_m = encode_batch(g, m, batch, Modality::kMotion);
  Var<T> e_t = encode_batch(g, m, batch, Modality::kText);
  std::optional<Var<T>> e_v;
  if (three) e_v = encode_batch(g, m, batch, Modality::kVideo);

  Var<T> log_tau = g.param(m.log_temperature);
  AlignmentTerms<T> align = total_alignment_loss(e_m, e_t, e_v, log_tau, target, lc.modality_mode);

  FusionOutput<T> fused = fuse(g, m.fusion, e_m, e_t, e_v);
  std::vector<Var<T>> recon_terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var<T> row = batch.size() == 1 ? fused.fused : ad::slice(fused.fused, 0, i, 1);
    Var<T> recon = m.decoder.decode(g, row, batch[i]->motion.frames);
    recon_terms.push_back(reconstruction_loss(recon, batch[i]->motion));
  }
  Var<T> l_recon = recon_terms.size() == 1 ? recon_terms[0]
                                           : ad::mean(ad::concat(std::span<const Var<T>>(recon_terms), 0), 0);
  Var<T> total = ad::add(align.l_align, ad::scale(l_recon, static_cast<T>(lc.lambda_recon)));

  BatchLoss<T> out{total, {}, std::move(fused.weights)};
  out.breakdown.l_mt = align.l_mt.item();
  out.breakdown.l_mv = align.l_mv ? align.l_mv->item() : 0.0;
  out.breakdown.l_tv = align.l_tv ? align.l_tv->item() : 0.0;
  out.breakdown.l_align = align.l_align.item();
  out.breakdown.l_recon = l_recon.item();
  out.breakdown.l_total = total.item();
  return out;
}

// Embeddings of every sample for one modality, computed without gradients.
template <typename T>
EmbeddingMatrix embed(Model<T>& m, const std::vector<const TriModalSample*>& samples, Modality modality,
                      std::size_t chunk = 64) {
  EmbeddingMatrix out{samples.size(), m.config.latent_dim(), {}};
  out.values.reserve(out.rows * out.dim);
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<const TriModalSample*> part(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                            samples.begin() + static_cast<std::ptrdiff_t>(end));
    Graph<T> g(false);
    Var<T> e = encode_batch(g, m, part, modality);
    out.values.insert(out.values.end(), e.value().begin(), e.value().end());
  }
  return out;
}

// Mean joint-mode fusion weights (text, video, motion) over the samples.
template <typename T>
ModalityWeights modality_weight_probe(Model<T>& m, const std::vector<const TriModalSample*>& samples,
                                      ModalityMode mode = ModalityMode::kThreeModal, std::size_t chunk = 64) {
  if (m.fusion.mode != FusionMode::kJoint)
    throw ConfigError("modality_weight_probe: weights are undefined in summed fusion mode");
  if (samples.empty()) throw ShapeError("modality_weight_probe: no samples");
  ModalityWeights acc{0, 0, 0};
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<const TriModalSample*> part(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                            samples.begin() + static_cast<std::ptrdiff_t>(end));
    Graph<T> g(false);
    Var<T> e_m = encode_batch(g, m, part, Modality::kMotion);
    Var<T> e_t = encode_batch(g, m, part, Modality::kText);
    std::optional<Var<T>> e_v;
    if (mode == ModalityMode::kThreeModal) e_v = encode_batch(g, m, part, Modality::kVideo);
    auto fused = fuse(g, m.fusion, e_m, e_t, e_v);
    for (const auto& w : fused.weights)
      for (std::size_t k = 0; k < 3; ++k) acc[k] += w[k];
  }
  for (auto& a : acc) a /= static_cast<double>(samples.size());
  return acc;
}

}  // namespace trimodal
