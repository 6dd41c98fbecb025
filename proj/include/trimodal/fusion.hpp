#pragma once

// Motion-as-query fusion, the transformer motion decoder and the
// reconstruction loss.
//
// Joint mode: per head, q = e_m Wq, keys/values are {e_m, e_t, e_v} projected by
// Wk/Wv, one softmax over the three scores q.k / sqrt(d_head), output
// sum_i w_i v_i. The weights, averaged over heads, are reported as
// (text, video, motion). Summed mode adds three single-key attentions, each of
// which has weight 1, so the output is V e_m + V e_t + V e_v and no weights
// exist. In 2-modal mode the video key is absent.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/encoders.hpp"
#include "trimodal/nn.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

enum class FusionMode { kJoint, kSummed };

inline std::string_view fusion_mode_name(FusionMode m) { return m == FusionMode::kJoint ? "joint" : "summed"; }

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "joint") return FusionMode::kJoint;
  if (s == "summed") return FusionMode::kSummed;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

// Attention mass per modality, ordered (text, video, motion).
using ModalityWeights = std::array<double, 3>;

template <typename T>
struct FusionParams {
  Tensor<T> wq, wk, wv;  // C x C
  FusionMode mode = FusionMode::kJoint;
  std::size_t heads = 1;

  static FusionParams init(std::size_t dim, std::size_t heads, FusionMode mode, SplitMix64& rng) {
    if (heads == 0 || dim % heads != 0) throw ShapeError("fusion head count must divide the latent dim");
    return FusionParams{normal_tensor<T>(dim, dim, rng), normal_tensor<T>(dim, dim, rng),
                        normal_tensor<T>(dim, dim, rng), mode, heads};
  }

  static FusionParams identity(std::size_t dim, FusionMode mode, std::size_t heads = 1) {
    FusionParams f{Tensor<T>::zeros({dim, dim}, true), Tensor<T>::zeros({dim, dim}, true),
                   Tensor<T>::zeros({dim, dim}, true), mode, heads};
    for (std::size_t i = 0; i < dim; ++i) f.wq.at(i, i) = f.wk.at(i, i) = f.wv.at(i, i) = T(1);
    return f;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".wq", &wq);
    out.emplace_back(prefix + ".wk", &wk);
    out.emplace_back(prefix + ".wv", &wv);
  }
};

template <typename T>
struct FusionOutput {
  Var<T> fused;                          // B x C
  std::vector<ModalityWeights> weights;  // per row; empty in summed mode
};

// Rows of e_m, e_t, e_v are the per-sample embeddings (B x C each).
template <typename T>
FusionOutput<T> fuse(Graph<T>& g, FusionParams<T>& p, Var<T> e_m, Var<T> e_t, std::optional<Var<T>> e_v) {
  const std::size_t B = e_m.rows(), C = e_m.cols();
  auto check = [&](Var<T> e, const char* name) {
    if (e.shape() != e_m.shape())
      throw ShapeError(std::string("fuse: ") + name + " embedding shape " + shape_str(e.shape()) + " differs from motion " +
                       shape_str(e_m.shape()));
  };
  check(e_t, "text");
  if (e_v) check(*e_v, "video");
  if (p.wq.shape != Shape{C, C}) throw ShapeError("fuse: projection shape does not match latent dim");

  std::vector<Var<T>> sources{e_m, e_t};  // motion, text, [video]
  if (e_v) sources.push_back(*e_v);
  Var<T> wq = g.param(p.wq), wk = g.param(p.wk), wv = g.param(p.wv);
  std::vector<Var<T>> values;
  for (auto& s : sources) values.push_back(ad::matmul(s, wv));

  FusionOutput<T> out;
  if (p.mode == FusionMode::kSummed) {
    Var<T> acc = values[0];
    for (std::size_t i = 1; i < values.size(); ++i) acc = ad::add(acc, values[i]);
    out.fused = acc;
    return out;
  }
  if (p.mode != FusionMode::kJoint) throw ConfigError("fuse: unknown fusion mode");

  const std::size_t H = p.heads;
  if (H == 0 || C % H != 0) throw ShapeError("fuse: head count must divide the latent dim");
  const std::size_t dh = C / H;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  Var<T> q = ad::matmul(e_m, wq);
  std::vector<Var<T>> keys;
  for (auto& s : sources) keys.push_back(ad::matmul(s, wk));

  out.weights.assign(B, ModalityWeights{0, 0, 0});
  std::vector<Var<T>> head_out;
  for (std::size_t h = 0; h < H; ++h) {
    auto cols = [&](Var<T> x) { return H == 1 ? x : ad::slice(x, 1, h * dh, dh); };
    Var<T> qh = cols(q);
    std::vector<Var<T>> scores;
    for (auto& k : keys) scores.push_back(ad::scale(ad::sum(ad::mul(qh, cols(k)), 1), inv_sqrt));
    Var<T> w = ad::softmax_rows(ad::concat(std::span<const Var<T>>(scores), 1));  // B x n_sources
    Var<T> acc;
    for (std::size_t i = 0; i < values.size(); ++i) {
      Var<T> term = ad::mul(ad::broadcast(ad::slice(w, 1, i, 1), Shape{B, dh}), cols(values[i]));
      acc = i == 0 ? term : ad::add(acc, term);
    }
    head_out.push_back(acc);
    const auto& wv_ = w.value();
    const std::size_t n = sources.size();
    for (std::size_t r = 0; r < B; ++r) {
      out.weights[r][2] += static_cast<double>(wv_[r * n + 0]) / static_cast<double>(H);
      out.weights[r][0] += static_cast<double>(wv_[r * n + 1]) / static_cast<double>(H);
      if (n == 3) out.weights[r][1] += static_cast<double>(wv_[r * n + 2]) / static_cast<double>(H);
    }
  }
  out.fused = H == 1 ? head_out[0] : ad::concat(std::span<const Var<T>>(head_out), 1);
  return out;
}

template <typename T>
struct MotionDecoder {
  Tensor<T> duration_queries;  // max_motion_len x C
  TransformerStack<T> stack;
  Linear<T> output;  // C -> c_m

  static MotionDecoder init(const TransformerShape& s, std::size_t max_motion_len, std::size_t motion_features,
                            SplitMix64& rng) {
    MotionDecoder d;
    d.duration_queries = normal_tensor<T>(max_motion_len, s.dim, rng);
    d.stack = TransformerStack<T>::init(s, rng);
    d.output = Linear<T>::init(s.dim, motion_features, rng);
    return d;
  }

  std::size_t max_len() const { return duration_queries.shape[0]; }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".duration_queries", &duration_queries);
    stack.collect(prefix, out);
    output.collect(prefix + ".output", out);
  }

  // fused: 1 x C. Returns l_m x c_m.
  Var<T> decode(Graph<T>& g, Var<T> fused, std::size_t length) {
    if (length == 0 || length > max_len())
      throw ShapeError("decode_motion: length " + std::to_string(length) + " outside [1, " + std::to_string(max_len()) +
                       "]");
    if (fused.rows() != 1 || fused.cols() != duration_queries.shape[1])
      throw ShapeError("decode_motion: fused embedding must be 1 x " + std::to_string(duration_queries.shape[1]));
    Var<T> queries = ad::slice(g.param(duration_queries), 0, 0, length);
    Var<T> x = ad::add(queries, ad::broadcast(fused, queries.shape()));
    Var<T> h = stack.final_ln(g, stack.run_blocks(g, x));
    return output(g, h);
  }
};

// Mean squared error over the l_m x c_m entries of the true sequence.
template <typename T>
Var<T> reconstruction_loss(Var<T> recon, const MotionSequence& target) {
  if (recon.shape() != Shape{target.frames, target.features})
    throw ShapeError("reconstruction_loss: reconstruction " + shape_str(recon.shape()) + " vs motion " +
                     shape_str({target.frames, target.features}));
  Var<T> diff = ad::sub(recon, feature_constant<T>(*recon.graph, target));
  return ad::mean_all(ad::mul(diff, diff));
}

}  // namespace trimodal
