#pragma once

// Contrastive alignment with negative filtering.
//
// The target matrix keeps label cosines that reach the threshold and zeroes the
// rest; the diagonal is fixed at 1. Predicted matrices are row softmaxes of
// cosine / tau. Each modality pair contributes
//   KL(rownorm(S_target) || S_pred^{x2y}) + KL(rownorm(S_target^T) || S_pred^{y2x}),
// with each KL averaged over rows and 0 log 0 taken as 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/tensor.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

inline constexpr double kMinLabelNorm = 1e-6;

enum class ModalityMode { kTwoModal, kThreeModal };

inline std::string_view modality_mode_name(ModalityMode m) {
  return m == ModalityMode::kTwoModal ? "2-modal" : "3-modal";
}

inline ModalityMode parse_modality_mode(std::string_view s) {
  if (s == "2-modal" || s == "2" || s == "two") return ModalityMode::kTwoModal;
  if (s == "3-modal" || s == "3" || s == "three") return ModalityMode::kThreeModal;
  throw ConfigError("unknown modality mode '" + std::string(s) + "'");
}

enum class SimilarityKind { kTarget, kPredicted };

struct SimilarityMatrix {
  std::size_t size = 0;  // B
  std::vector<double> values;
  SimilarityKind kind = SimilarityKind::kTarget;

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

struct LossBreakdown {
  double l_mt = 0, l_mv = 0, l_tv = 0, l_align = 0, l_recon = 0, l_total = 0;
};

inline double cosine(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < n; ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
  return std::clamp(c, -1.0, 1.0);
}

inline SimilarityMatrix build_target_matrix(const EmbeddingMatrix& labels, double epsilon) {
  if (labels.rows < 2) throw ShapeError("build_target_matrix: need at least 2 labels");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("negative-filtering threshold must lie in [0, 1]");
  for (std::size_t i = 0; i < labels.rows; ++i) {
    double n2 = 0;
    for (std::size_t k = 0; k < labels.dim; ++k) {
      const double v = labels.row(i)[k];
      if (!std::isfinite(v)) throw NumericalError("build_target_matrix: non-finite label");
      n2 += v * v;
    }
    if (std::sqrt(n2) < kMinLabelNorm)
      throw NumericalError("build_target_matrix: degenerate label row " + std::to_string(i));
  }
  const std::size_t B = labels.rows;
  SimilarityMatrix s{B, std::vector<double>(B * B, 0.0), SimilarityKind::kTarget};
  for (std::size_t i = 0; i < B; ++i) {
    s.values[i * B + i] = 1.0;
    for (std::size_t j = i + 1; j < B; ++j) {
      const double c = cosine(labels.row(i), labels.row(j), labels.dim);
      const double v = c >= epsilon ? c : 0.0;
      s.values[i * B + j] = v;
      s.values[j * B + i] = v;
    }
  }
  return s;
}

// Rows normalised to sum to one; `transposed` normalises the rows of S^T.
inline std::vector<double> normalized_target(const SimilarityMatrix& s, bool transposed) {
  const std::size_t B = s.size;
  std::vector<double> p(B * B);
  for (std::size_t i = 0; i < B; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < B; ++j) z += transposed ? s.at(j, i) : s.at(i, j);
    if (!(z > 0)) throw NumericalError("target row " + std::to_string(i) + " has no mass");
    for (std::size_t j = 0; j < B; ++j) p[i * B + j] = (transposed ? s.at(j, i) : s.at(i, j)) / z;
  }
  return p;
}

namespace detail {

template <typename T>
Var<T> scaled_cosine(Var<T> query, Var<T> gallery, Var<T> log_temperature) {
  if (query.cols() != gallery.cols())
    throw ShapeError("predicted_similarity: embedding width mismatch " + shape_str(query.shape()) + " vs " +
                     shape_str(gallery.shape()));
  if (log_temperature.shape() != Shape{1, 1}) throw ShapeError("predicted_similarity: temperature must be 1x1");
  Var<T> cos = ad::cosine_matrix(query, gallery);
  Var<T> inv_tau = ad::exp(ad::scale(log_temperature, T(-1)));
  return ad::mul(cos, ad::broadcast(inv_tau, cos.shape()));
}

// Row-averaged KL(P || Q) for a constant row-stochastic P, given log Q.
template <typename T>
Var<T> kl_rows_from_log(Var<T> log_q, const std::vector<double>& p) {
  const std::size_t B = log_q.rows();
  if (p.size() != log_q.value().size()) throw ShapeError("kl: target/prediction size mismatch");
  double neg_entropy = 0;
  for (double x : p)
    if (x > 0) neg_entropy += x * std::log(x);
  Graph<T>& g = *log_q.graph;
  Var<T> pc = g.constant(log_q.shape(), std::vector<T>(p.begin(), p.end()));
  Var<T> cross = ad::sum_all(ad::mul(pc, log_q));
  Var<T> kl = ad::add(ad::scale(cross, T(-1)), g.constant({1, 1}, {static_cast<T>(neg_entropy)}));
  return ad::scale(kl, T(1) / static_cast<T>(B));
}

template <typename T>
void check_pair_shapes(Var<T> a, Var<T> b, const SimilarityMatrix& target) {
  const Shape expect{target.size, target.size};
  if (a.shape() != expect || b.shape() != expect)
    throw ShapeError("kl_alignment_pair: predicted matrices must be " + shape_str(expect));
}

}  // namespace detail

// Row i = softmax_j(cos(query_i, gallery_j) / tau), tau = exp(log_temperature).
template <typename T>
Var<T> predicted_similarity(Var<T> query, Var<T> gallery, Var<T> log_temperature) {
  return ad::softmax_rows(detail::scaled_cosine(query, gallery, log_temperature));
}

// Row-averaged KL(P || Q) for a constant row-stochastic P.
template <typename T>
Var<T> kl_rows(Var<T> q, const std::vector<double>& p) {
  for (T v : q.value())
    if (!(v > T(0))) throw NumericalError("kl: predicted similarity entry is not positive");
  return detail::kl_rows_from_log(ad::log(q), p);
}

template <typename T>
Var<T> kl_alignment_pair(Var<T> s_pred_xy, Var<T> s_pred_yx, const SimilarityMatrix& target) {
  detail::check_pair_shapes(s_pred_xy, s_pred_yx, target);
  return ad::add(kl_rows(s_pred_xy, normalized_target(target, false)),
                 kl_rows(s_pred_yx, normalized_target(target, true)));
}

// Alignment loss between modalities x and y; target rows index x. Same value
// as kl_alignment_pair(predicted_similarity(x, y), predicted_similarity(y, x)),
// evaluated through log-softmax so that tiny probabilities cannot underflow.
template <typename T>
Var<T> pair_alignment_loss(Var<T> e_x, Var<T> e_y, Var<T> log_temperature, const SimilarityMatrix& target) {
  Var<T> log_xy = ad::log_softmax_rows(detail::scaled_cosine(e_x, e_y, log_temperature));
  Var<T> log_yx = ad::log_softmax_rows(detail::scaled_cosine(e_y, e_x, log_temperature));
  detail::check_pair_shapes(log_xy, log_yx, target);
  return ad::add(detail::kl_rows_from_log(log_xy, normalized_target(target, false)),
                 detail::kl_rows_from_log(log_yx, normalized_target(target, true)));
}

template <typename T>
struct AlignmentTerms {
  Var<T> l_mt;
  std::optional<Var<T>> l_mv;
  std::optional<Var<T>> l_tv;
  Var<T> l_align;
};

// Sum of pairwise losses; in 2-modal mode only text/motion contributes and
// e_v may be absent.
template <typename T>
AlignmentTerms<T> total_alignment_loss(Var<T> e_m, Var<T> e_t, std::optional<Var<T>> e_v, Var<T> log_temperature,
                                       const SimilarityMatrix& target, ModalityMode mode) {
  const std::size_t B = target.size;
  auto check = [B](Var<T> e, const char* name) {
    if (e.rows() != B)
      throw ShapeError(std::string("total_alignment_loss: ") + name + " batch has " + std::to_string(e.rows()) +
                       " rows, target has " + std::to_string(B));
  };
  check(e_m, "motion");
  check(e_t, "text");
  AlignmentTerms<T> out;
  out.l_mt = pair_alignment_loss(e_t, e_m, log_temperature, target);
  if (mode == ModalityMode::kTwoModal) {
    out.l_align = out.l_mt;
    return out;
  }
  if (!e_v) throw ShapeError("total_alignment_loss: 3-modal mode needs video embeddings");
  check(*e_v, "video");
  out.l_mv = pair_alignment_loss(*e_v, e_m, log_temperature, target);
  out.l_tv = pair_alignment_loss(e_t, *e_v, log_temperature, target);
  out.l_align = ad::add(ad::add(out.l_mt, *out.l_mv), *out.l_tv);
  return out;
}

}  // namespace trimodal
