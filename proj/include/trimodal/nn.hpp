#pragma once

// Building blocks shared by the encoders, the fusion module and the decoder:
// linear layers, layer norm parameters and a pre-norm transformer stack.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "trimodal/rng.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal {

inline constexpr double kInitStd = 0.02;

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
Tensor<T> normal_tensor(std::size_t rows, std::size_t cols, SplitMix64& rng, double stddev = kInitStd) {
  Tensor<T> t = Tensor<T>::zeros({rows, cols}, true);
  for (auto& v : t.values) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
Tensor<T> filled_tensor(std::size_t rows, std::size_t cols, T value) {
  Tensor<T> t(Shape{rows, cols}, std::vector<T>(rows * cols, value), true);
  return t;
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // 1 x out

  static Linear init(std::size_t in, std::size_t out, SplitMix64& rng) {
    return Linear{normal_tensor<T>(in, out, rng), filled_tensor<T>(1, out, T(0))};
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) { return ad::add_row(ad::matmul(x, g.param(weight)), g.param(bias)); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNormParams init(std::size_t dim) {
    return LayerNormParams{filled_tensor<T>(1, dim, T(1)), filled_tensor<T>(1, dim, T(0))};
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) { return ad::layer_norm(x, g.param(gain), g.param(bias)); }
};

struct TransformerShape {
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ffn_dim = 64;

  void validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw ShapeError("head count " + std::to_string(heads) + " must divide latent dim " + std::to_string(dim));
    if (ffn_dim == 0) throw ShapeError("feed-forward width must be positive");
  }
};

// Pre-norm block: x += MHA(LN(x)); x += FFN(LN(x)).
template <typename T>
struct TransformerBlock {
  LayerNormParams<T> ln_attn;
  Linear<T> q, k, v, o;
  LayerNormParams<T> ln_ffn;
  Linear<T> ff_in, ff_out;

  static TransformerBlock init(const TransformerShape& s, SplitMix64& rng) {
    TransformerBlock b;
    b.ln_attn = LayerNormParams<T>::init(s.dim);
    b.q = Linear<T>::init(s.dim, s.dim, rng);
    b.k = Linear<T>::init(s.dim, s.dim, rng);
    b.v = Linear<T>::init(s.dim, s.dim, rng);
    b.o = Linear<T>::init(s.dim, s.dim, rng);
    b.ln_ffn = LayerNormParams<T>::init(s.dim);
    b.ff_in = Linear<T>::init(s.dim, s.ffn_dim, rng);
    b.ff_out = Linear<T>::init(s.ffn_dim, s.dim, rng);
    return b;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    ln_attn.collect(prefix + ".ln_attn", out);
    q.collect(prefix + ".attn.q", out);
    k.collect(prefix + ".attn.k", out);
    v.collect(prefix + ".attn.v", out);
    o.collect(prefix + ".attn.o", out);
    ln_ffn.collect(prefix + ".ln_ffn", out);
    ff_in.collect(prefix + ".ffn.in", out);
    ff_out.collect(prefix + ".ffn.out", out);
  }
};

// Multi-head self-attention over the rows of x (L x C). `key_padding`, when
// non-empty, marks key positions (length L) that must receive no attention.
template <typename T>
Var<T> self_attention(Graph<T>& g, TransformerBlock<T>& b, Var<T> x, std::size_t heads,
                      const std::vector<bool>& key_padding = {}) {
  const std::size_t L = x.rows(), C = x.cols(), dh = C / heads;
  Var<T> q = b.q(g, x), k = b.k(g, x), v = b.v(g, x);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<bool> mask;
  if (!key_padding.empty()) {
    if (key_padding.size() != L) throw ShapeError("self_attention: key padding mask has wrong length");
    mask.resize(L * L);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) mask[i * L + j] = key_padding[j];
  }
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = heads == 1 ? q : ad::slice(q, 1, h * dh, dh);
    Var<T> kh = heads == 1 ? k : ad::slice(k, 1, h * dh, dh);
    Var<T> vh = heads == 1 ? v : ad::slice(v, 1, h * dh, dh);
    Var<T> scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (!mask.empty()) scores = ad::masked_fill(scores, mask, T(-1e9));
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  Var<T> merged = heads == 1 ? outs[0] : ad::concat(std::span<const Var<T>>(outs), 1);
  return b.o(g, merged);
}

template <typename T>
struct TransformerStack {
  TransformerShape shape;
  std::vector<TransformerBlock<T>> blocks;
  LayerNormParams<T> final_ln;

  static TransformerStack init(const TransformerShape& s, SplitMix64& rng) {
    s.validate();
    TransformerStack st;
    st.shape = s;
    for (std::size_t i = 0; i < s.layers; ++i) st.blocks.push_back(TransformerBlock<T>::init(s, rng));
    st.final_ln = LayerNormParams<T>::init(s.dim);
    return st;
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
    final_ln.collect(prefix + ".final_ln", out);
  }

  // Runs the blocks only; callers pool and then apply final_ln.
  Var<T> run_blocks(Graph<T>& g, Var<T> x, const std::vector<bool>& key_padding = {}) {
    for (auto& b : blocks) {
      x = ad::add(x, self_attention(g, b, b.ln_attn(g, x), shape.heads, key_padding));
      Var<T> h = b.ln_ffn(g, x);
      x = ad::add(x, b.ff_out(g, ad::gelu(b.ff_in(g, h))));
    }
    return x;
  }
};

}  // namespace trimodal
