#pragma once

// Modality encoders. Each maps one variable-length sequence to a 1 x C
// embedding:
//   motion: linear projection, learned [CLS] prepended, positional embeddings
//           (the CLS token takes position 0), transformer, output at position 0
//   text:   token-embedding lookup instead of the projection, otherwise as motion
//   video:  linear projection, positional embeddings, temporal transformer,
//           mean over the l_v output positions
// The pooled vector goes through the stack's final layer norm.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/nn.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

struct EncoderConfig {
  TransformerShape transformer;
  std::size_t motion_features = 12;  // c_m
  std::size_t video_features = 16;   // c_v
  std::size_t vocab_size = 64;
  std::size_t max_motion_len = 16;
  std::size_t max_text_len = 8;
  std::size_t frames_per_video = 8;  // l_v

  void validate() const {
    transformer.validate();
    if (motion_features == 0 || video_features == 0 || vocab_size == 0)
      throw ConfigError("feature widths and vocab size must be positive");
    if (max_motion_len == 0 || max_text_len == 0 || frames_per_video == 0)
      throw ConfigError("sequence length limits must be positive");
  }
};

template <typename T>
Var<T> feature_constant(Graph<T>& g, const FeatureSequence& s) {
  std::vector<T> v(s.values.begin(), s.values.end());
  return g.constant({s.frames, s.features}, std::move(v));
}

template <typename T>
struct MotionEncoder {
  Linear<T> input;
  Tensor<T> cls;  // 1 x C
  Tensor<T> pos;  // (max_motion_len + 1) x C
  TransformerStack<T> stack;
  std::size_t max_len = 0;

  static MotionEncoder init(const EncoderConfig& c, SplitMix64& rng) {
    const std::size_t C = c.transformer.dim;
    MotionEncoder e;
    e.input = Linear<T>::init(c.motion_features, C, rng);
    e.cls = normal_tensor<T>(1, C, rng);
    e.pos = normal_tensor<T>(c.max_motion_len + 1, C, rng);
    e.stack = TransformerStack<T>::init(c.transformer, rng);
    e.max_len = c.max_motion_len;
    return e;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    input.collect(prefix + ".input", out);
    out.emplace_back(prefix + ".cls", &cls);
    out.emplace_back(prefix + ".pos", &pos);
    stack.collect(prefix, out);
  }

  Var<T> encode(Graph<T>& g, const MotionSequence& seq) {
    if (seq.frames == 0) throw ShapeError("encode_motion: empty motion sequence");
    if (seq.frames > max_len)
      throw ShapeError("encode_motion: length " + std::to_string(seq.frames) + " exceeds max_motion_len " +
                       std::to_string(max_len));
    if (seq.features != input.weight.shape[0])
      throw ShapeError("encode_motion: expected " + std::to_string(input.weight.shape[0]) + " pose features, got " +
                       std::to_string(seq.features));
    Var<T> x = input(g, feature_constant<T>(g, seq));
    Var<T> tokens = ad::concat({g.param(cls), x}, 0);
    tokens = ad::add(tokens, ad::slice(g.param(pos), 0, 0, seq.frames + 1));
    Var<T> h = stack.run_blocks(g, tokens);
    return stack.final_ln(g, ad::slice(h, 0, 0, 1));
  }
};

template <typename T>
struct TextEncoder {
  Tensor<T> token_table;  // vocab x C
  Tensor<T> cls;
  Tensor<T> pos;  // (max_text_len + 1) x C
  TransformerStack<T> stack;
  std::size_t max_len = 0;

  static TextEncoder init(const EncoderConfig& c, SplitMix64& rng) {
    const std::size_t C = c.transformer.dim;
    TextEncoder e;
    e.token_table = normal_tensor<T>(c.vocab_size, C, rng);
    e.cls = normal_tensor<T>(1, C, rng);
    e.pos = normal_tensor<T>(c.max_text_len + 1, C, rng);
    e.stack = TransformerStack<T>::init(c.transformer, rng);
    e.max_len = c.max_text_len;
    return e;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".token_table", &token_table);
    out.emplace_back(prefix + ".cls", &cls);
    out.emplace_back(prefix + ".pos", &pos);
    stack.collect(prefix, out);
  }

  Var<T> encode(Graph<T>& g, const TextSequence& seq) {
    const std::size_t L = seq.tokens.size();
    if (L == 0) throw ShapeError("encode_text: empty token sequence");
    if (L > max_len)
      throw ShapeError("encode_text: length " + std::to_string(L) + " exceeds max_text_len " + std::to_string(max_len));
    Var<T> x = ad::gather_rows(g.param(token_table), std::span<const int>(seq.tokens));
    Var<T> tokens = ad::concat({g.param(cls), x}, 0);
    tokens = ad::add(tokens, ad::slice(g.param(pos), 0, 0, L + 1));
    Var<T> h = stack.run_blocks(g, tokens);
    return stack.final_ln(g, ad::slice(h, 0, 0, 1));
  }
};

template <typename T>
struct VideoEncoder {
  Linear<T> input;
  Tensor<T> pos;  // frames_per_video x C
  TransformerStack<T> stack;

  static VideoEncoder init(const EncoderConfig& c, SplitMix64& rng) {
    VideoEncoder e;
    e.input = Linear<T>::init(c.video_features, c.transformer.dim, rng);
    e.pos = normal_tensor<T>(c.frames_per_video, c.transformer.dim, rng);
    e.stack = TransformerStack<T>::init(c.transformer, rng);
    return e;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    input.collect(prefix + ".input", out);
    out.emplace_back(prefix + ".pos", &pos);
    stack.collect(prefix, out);
  }

  Var<T> encode(Graph<T>& g, const VideoSequence& seq) {
    if (seq.frames == 0) throw ShapeError("encode_video: empty video sequence");
    if (seq.frames != pos.shape[0])
      throw ShapeError("encode_video: expected " + std::to_string(pos.shape[0]) + " frames, got " +
                       std::to_string(seq.frames));
    if (seq.features != input.weight.shape[0])
      throw ShapeError("encode_video: expected " + std::to_string(input.weight.shape[0]) + " frame features, got " +
                       std::to_string(seq.features));
    Var<T> x = ad::add(input(g, feature_constant<T>(g, seq)), g.param(pos));
    Var<T> h = stack.run_blocks(g, x);
    return stack.final_ln(g, ad::mean(h, 0));
  }
};

}  // namespace trimodal
