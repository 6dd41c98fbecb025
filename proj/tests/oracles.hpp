#pragma once

// Straight-line scalar re-implementations used as test oracles. They read
// parameter values from the model structs but share no arithmetic with the
// autodiff graph: every formula is written out with plain loops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "trimodal/model.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from_tensor(const trimodal::Tensor<double>& t) {
  Mat m(t.shape[0], std::vector<double>(t.shape[1]));
  for (std::size_t i = 0; i < t.shape[0]; ++i)
    for (std::size_t j = 0; j < t.shape[1]; ++j) m[i][j] = t.values[i * t.shape[1] + j];
  return m;
}

inline Mat from_features(const trimodal::FeatureSequence& s) {
  Mat m(s.frames, std::vector<double>(s.features));
  for (std::size_t i = 0; i < s.frames; ++i)
    for (std::size_t j = 0; j < s.features; ++j) m[i][j] = s.at(i, j);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Mat linear(const Mat& x, const trimodal::Linear<double>& l) {
  Mat w = from_tensor(l.weight), out = matmul(x, w);
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += l.bias.values[j];
  return out;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - mx);
  for (auto& v : e) v /= s;
  return e;
}

inline Mat layer_norm(const Mat& x, const trimodal::LayerNormParams<double>& p) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mu = 0, var = 0;
    for (double v : x[i]) mu += v;
    mu /= n;
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * p.gain.values[j] + p.bias.values[j];
  }
  return out;
}

inline Mat attention(const Mat& x, const trimodal::TransformerBlock<double>& b, std::size_t heads,
                     const std::vector<bool>& key_padding = {}) {
  const Mat q = linear(x, b.q), k = linear(x, b.k), v = linear(x, b.v);
  const std::size_t L = x.size(), C = x[0].size(), dh = C / heads;
  Mat merged(L, std::vector<double>(C, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> s;
      std::vector<std::size_t> keys;
      for (std::size_t j = 0; j < L; ++j) {
        if (!key_padding.empty() && key_padding[j]) continue;
        double d = 0;
        for (std::size_t c = 0; c < dh; ++c) d += q[i][h * dh + c] * k[j][h * dh + c];
        s.push_back(d / std::sqrt(static_cast<double>(dh)));
        keys.push_back(j);
      }
      const auto w = softmax(s);
      for (std::size_t n = 0; n < keys.size(); ++n)
        for (std::size_t c = 0; c < dh; ++c) merged[i][h * dh + c] += w[n] * v[keys[n]][h * dh + c];
    }
  return linear(merged, b.o);
}

inline Mat run_blocks(Mat x, const trimodal::TransformerStack<double>& st) {
  for (const auto& b : st.blocks) {
    x = add(x, attention(layer_norm(x, b.ln_attn), b, st.shape.heads));
    Mat h = linear(layer_norm(x, b.ln_ffn), b.ff_in);
    for (auto& row : h)
      for (auto& v : row) v = gelu(v);
    x = add(x, linear(h, b.ff_out));
  }
  return x;
}

inline std::vector<double> final_row(const Mat& row, const trimodal::TransformerStack<double>& st) {
  return layer_norm(row, st.final_ln)[0];
}

inline Mat prepend(const std::vector<double>& first, const Mat& rest) {
  Mat out{first};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

inline Mat add_rows(Mat x, const trimodal::Tensor<double>& table) {
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] += table.values[i * table.shape[1] + j];
  return x;
}

inline std::vector<double> encode_motion(const trimodal::MotionEncoder<double>& e, const trimodal::MotionSequence& m) {
  Mat tokens = add_rows(prepend(e.cls.values, linear(from_features(m), e.input)), e.pos);
  return final_row({run_blocks(tokens, e.stack)[0]}, e.stack);
}

inline std::vector<double> encode_text(const trimodal::TextEncoder<double>& e, const trimodal::TextSequence& t) {
  const std::size_t C = e.cls.values.size();
  Mat emb;
  for (int tok : t.tokens)
    emb.emplace_back(e.token_table.values.begin() + tok * static_cast<std::ptrdiff_t>(C),
                     e.token_table.values.begin() + (tok + 1) * static_cast<std::ptrdiff_t>(C));
  Mat tokens = add_rows(prepend(e.cls.values, emb), e.pos);
  return final_row({run_blocks(tokens, e.stack)[0]}, e.stack);
}

inline std::vector<double> encode_video(const trimodal::VideoEncoder<double>& e, const trimodal::VideoSequence& v) {
  Mat h = run_blocks(add_rows(linear(from_features(v), e.input), e.pos), e.stack);
  std::vector<double> mean(h[0].size(), 0.0);
  for (const auto& row : h)
    for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j] / static_cast<double>(h.size());
  return final_row({mean}, e.stack);
}

inline Mat decode(const trimodal::MotionDecoder<double>& d, const std::vector<double>& fused, std::size_t length) {
  Mat x(length, fused);
  x = add_rows(x, d.duration_queries);
  Mat h = layer_norm(run_blocks(x, d.stack), d.stack.final_ln);
  return linear(h, d.output);
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12), -1.0, 1.0);
}

// Target with negative filtering: diag 1, cos >= eps kept, else 0.
inline Mat target(const Mat& labels, double eps) {
  const std::size_t B = labels.size();
  Mat s(B, std::vector<double>(B, 0.0));
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      if (i == j) {
        s[i][j] = 1.0;
        continue;
      }
      const double c = cosine(labels[i], labels[j]);
      s[i][j] = c >= eps ? c : 0.0;
    }
  return s;
}

// KL(P || softmax(cos(x_i, y_j) / tau)) averaged over rows, P = row-normalised target.
inline double kl_direction(const Mat& x, const Mat& y, double tau, const Mat& target_rows) {
  const std::size_t B = x.size();
  double total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<double> z(B);
    for (std::size_t j = 0; j < B; ++j) z[j] = cosine(x[i], y[j]) / tau;
    const auto q = softmax(z);
    double mass = 0;
    for (double v : target_rows[i]) mass += v;
    for (std::size_t j = 0; j < B; ++j) {
      const double p = target_rows[i][j] / mass;
      if (p > 0) total += p * std::log(p / q[j]);
    }
  }
  return total / static_cast<double>(B);
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline double pair_loss(const Mat& x, const Mat& y, double tau, const Mat& s) {
  return kl_direction(x, y, tau, s) + kl_direction(y, x, tau, transpose(s));
}

struct AlignmentParts {
  double l_mt = 0, l_mv = 0, l_tv = 0, l_align = 0;
};

inline AlignmentParts alignment(const Mat& e_m, const Mat& e_t, const Mat* e_v, double tau, const Mat& s) {
  AlignmentParts a;
  a.l_mt = pair_loss(e_t, e_m, tau, s);
  if (e_v) {
    a.l_mv = pair_loss(*e_v, e_m, tau, s);
    a.l_tv = pair_loss(e_t, *e_v, tau, s);
  }
  a.l_align = a.l_mt + a.l_mv + a.l_tv;
  return a;
}

// Joint-mode fusion of one sample; weights returned in (motion, text, video) key order.
inline std::vector<double> fuse_row(const trimodal::FusionParams<double>& p, const std::vector<double>& em,
                                    const std::vector<double>& et, const std::vector<double>* ev,
                                    std::vector<std::vector<double>>* head_weights = nullptr) {
  const Mat wq = from_tensor(p.wq), wk = from_tensor(p.wk), wv = from_tensor(p.wv);
  std::vector<Mat> src{{em}, {et}};
  if (ev) src.push_back({*ev});
  const std::size_t C = em.size();
  Mat keys, values;
  for (const auto& s : src) {
    keys.push_back(matmul(s, wk)[0]);
    values.push_back(matmul(s, wv)[0]);
  }
  std::vector<double> out(C, 0.0);
  if (p.mode == trimodal::FusionMode::kSummed) {
    for (const auto& v : values)
      for (std::size_t c = 0; c < C; ++c) out[c] += v[c];
    return out;
  }
  const auto q = matmul(Mat{em}, wq)[0];
  const std::size_t dh = C / p.heads;
  for (std::size_t h = 0; h < p.heads; ++h) {
    std::vector<double> s;
    for (const auto& k : keys) {
      double d = 0;
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) d += q[c] * k[c];
      s.push_back(d / std::sqrt(static_cast<double>(dh)));
    }
    const auto w = softmax(s);
    if (head_weights) head_weights->push_back(w);
    for (std::size_t i = 0; i < values.size(); ++i)
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[c] += w[i] * values[i][c];
  }
  return out;
}

inline double mse(const Mat& a, const trimodal::MotionSequence& m) {
  double s = 0;
  for (std::size_t i = 0; i < m.frames; ++i)
    for (std::size_t j = 0; j < m.features; ++j) s += (a[i][j] - m.at(i, j)) * (a[i][j] - m.at(i, j));
  return s / static_cast<double>(m.frames * m.features);
}

struct TotalParts {
  AlignmentParts align;
  double l_recon = 0, l_total = 0;
};

inline TotalParts total_loss(const trimodal::Model<double>& m, const std::vector<const trimodal::TriModalSample*>& b,
                             double eps, double lambda, bool three_modal) {
  Mat e_m, e_t, e_v, labels;
  for (const auto* s : b) {
    e_m.push_back(encode_motion(m.motion, s->motion));
    e_t.push_back(encode_text(m.text, s->text));
    if (three_modal) e_v.push_back(encode_video(m.video, s->video));
    labels.push_back(s->concept_latent);
  }
  const double tau = std::exp(m.log_temperature.values[0]);
  TotalParts t;
  t.align = alignment(e_m, e_t, three_modal ? &e_v : nullptr, tau, target(labels, eps));
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto fused = fuse_row(m.fusion, e_m[i], e_t[i], three_modal ? &e_v[i] : nullptr);
    t.l_recon += mse(decode(m.decoder, fused, b[i]->motion.frames), b[i]->motion) / static_cast<double>(b.size());
  }
  t.l_total = t.align.l_align + lambda * t.l_recon;
  return t;
}

}  // namespace oracle
