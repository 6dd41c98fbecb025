#pragma once

// Retrieval metrics and the four evaluation protocols.
//
// Query i's ground truth is gallery item i. Similarity is cosine; the rank of
// the ground truth is 1 + #{j : s_j > s_gt} + #{j : s_j == s_gt, id_j < id_gt}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "trimodal/alignment.hpp"
#include "trimodal/error.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

inline constexpr std::array<int, 5> kRecallRanks{1, 2, 3, 5, 10};

using RankingResult = std::vector<std::size_t>;

enum class Protocol { kAll, kAllWithThreshold, kDissimilarSubset, kSmallBatches };

inline std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kAll: return "all";
    case Protocol::kAllWithThreshold: return "all_with_threshold";
    case Protocol::kDissimilarSubset: return "dissimilar_subset";
    case Protocol::kSmallBatches: return "small_batches";
  }
  return "unknown";
}

inline Protocol parse_protocol(std::string_view s) {
  for (Protocol p : {Protocol::kAll, Protocol::kAllWithThreshold, Protocol::kDissimilarSubset, Protocol::kSmallBatches})
    if (s == protocol_name(p)) return p;
  throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

struct ProtocolConfig {
  double threshold = 0.8;
  std::size_t subset_size = 100;
  std::size_t batch_size = 32;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(threshold >= 0 && threshold <= 1)) throw ConfigError("protocol threshold must lie in [0, 1]");
    if (batch_size < 2) throw ConfigError("small-batch size must be at least 2");
    if (subset_size < 1) throw ConfigError("subset size must be positive");
    if (repetitions < 1) throw ConfigError("repetitions must be positive");
  }
};

struct RetrievalReport {
  std::string protocol;
  std::string direction;  // e.g. "text->motion"
  std::array<double, kRecallRanks.size()> recall{};  // percent, for kRecallRanks
  double medr = 0;
  std::size_t gallery_size = 0;
  std::uint64_t seed = 0;

  double recall_at(int k) const {
    for (std::size_t i = 0; i < kRecallRanks.size(); ++i)
      if (kRecallRanks[i] == k) return recall[i];
    throw ConfigError("recall@" + std::to_string(k) + " is not reported");
  }
};

// Queries, gallery and the label embeddings of the paired samples.
struct RetrievalSet {
  EmbeddingMatrix queries;
  EmbeddingMatrix gallery;
  EmbeddingMatrix labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return gallery.rows; }

  void validate() const {
    if (gallery.rows == 0) throw ShapeError("retrieval: empty gallery");
    if (queries.rows != gallery.rows || labels.rows != gallery.rows || ids.size() != gallery.rows)
      throw ShapeError("retrieval: queries, gallery, labels and ids must have equal counts");
    if (queries.dim != gallery.dim) throw ShapeError("retrieval: query/gallery embedding width mismatch");
  }

  RetrievalSet subset(const std::vector<std::size_t>& idx) const {
    RetrievalSet s{{0, queries.dim, {}}, {0, gallery.dim, {}}, {0, labels.dim, {}}, {}};
    for (std::size_t i : idx) {
      s.queries.values.insert(s.queries.values.end(), queries.row(i), queries.row(i) + queries.dim);
      s.gallery.values.insert(s.gallery.values.end(), gallery.row(i), gallery.row(i) + gallery.dim);
      s.labels.values.insert(s.labels.values.end(), labels.row(i), labels.row(i) + labels.dim);
      s.ids.push_back(ids[i]);
    }
    s.queries.rows = s.gallery.rows = s.labels.rows = idx.size();
    return s;
  }
};

inline std::vector<double> similarity_row(const EmbeddingMatrix& queries, std::size_t q, const EmbeddingMatrix& gallery) {
  std::vector<double> s(gallery.rows);
  for (std::size_t j = 0; j < gallery.rows; ++j) s[j] = cosine(queries.row(q), gallery.row(j), gallery.dim);
  return s;
}

inline RankingResult rank_queries(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                  const std::vector<std::size_t>& gt_index, const std::vector<std::uint64_t>& ids) {
  if (gallery.rows == 0) throw ShapeError("rank_queries: empty gallery");
  if (gt_index.size() != queries.rows) throw ShapeError("rank_queries: one ground-truth index per query required");
  if (ids.size() != gallery.rows) throw ShapeError("rank_queries: one id per gallery item required");
  if (queries.dim != gallery.dim) throw ShapeError("rank_queries: embedding width mismatch");
  RankingResult ranks(queries.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    const std::size_t gt = gt_index[q];
    if (gt >= gallery.rows) throw ShapeError("rank_queries: ground-truth index out of range");
    const auto s = similarity_row(queries, q, gallery);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < gallery.rows; ++j) {
      if (j == gt) continue;
      if (s[j] > s[gt] || (s[j] == s[gt] && ids[j] < ids[gt])) ++rank;
    }
    ranks[q] = rank;
  }
  return ranks;
}

inline double recall_at_k(const RankingResult& ranks, int k) {
  if (k < 1) throw ConfigError("recall_at_k: k must be >= 1");
  if (ranks.empty()) throw ShapeError("recall_at_k: no ranks");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= static_cast<std::size_t>(k); });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double medr(const RankingResult& ranks) {
  if (ranks.empty()) throw ShapeError("medr: no ranks");
  RankingResult r = ranks;
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  if (n % 2 == 1) return static_cast<double>(r[n / 2]);
  return 0.5 * (static_cast<double>(r[n / 2 - 1]) + static_cast<double>(r[n / 2]));
}

inline RetrievalReport make_report(std::string protocol, std::string direction, const RankingResult& ranks,
                                   std::size_t gallery_size, std::uint64_t seed) {
  RetrievalReport rep;
  rep.protocol = std::move(protocol);
  rep.direction = std::move(direction);
  for (std::size_t i = 0; i < kRecallRanks.size(); ++i) rep.recall[i] = recall_at_k(ranks, kRecallRanks[i]);
  rep.medr = medr(ranks);
  rep.gallery_size = gallery_size;
  rep.seed = seed;
  return rep;
}

inline std::vector<std::size_t> identity_index(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

inline RetrievalReport protocol_all(const RetrievalSet& set, const std::string& direction, std::uint64_t seed = 0) {
  set.validate();
  const auto ranks = rank_queries(set.queries, set.gallery, identity_index(set.size()), set.ids);
  return make_report(std::string(protocol_name(Protocol::kAll)), direction, ranks, set.size(), seed);
}

// Ground-truth similarity of two samples: label cosine clipped at 0, so that
// every item qualifies at threshold 0.
inline double label_similarity(const EmbeddingMatrix& labels, std::size_t a, std::size_t b) {
  return std::max(0.0, cosine(labels.row(a), labels.row(b), labels.dim));
}

// Effective rank: first position in the (similarity desc, id asc) order whose
// item is the ground truth or has label similarity >= threshold with it.
inline RankingResult threshold_ranks(const RetrievalSet& set, double threshold) {
  set.validate();
  const std::size_t N = set.size();
  RankingResult ranks(N);
  std::vector<std::size_t> order(N);
  for (std::size_t q = 0; q < N; ++q) {
    const auto s = similarity_row(set.queries, q, set.gallery);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (s[a] != s[b]) return s[a] > s[b];
      return set.ids[a] < set.ids[b];
    });
    for (std::size_t p = 0; p < N; ++p) {
      const std::size_t j = order[p];
      if (j == q || label_similarity(set.labels, j, q) >= threshold) {
        ranks[q] = p + 1;
        break;
      }
    }
  }
  return ranks;
}

inline RetrievalReport protocol_all_with_threshold(const RetrievalSet& set, const std::string& direction,
                                                   double threshold, std::uint64_t seed = 0) {
  if (!(threshold >= 0 && threshold <= 1)) throw ConfigError("threshold must lie in [0, 1]");
  return make_report(std::string(protocol_name(Protocol::kAllWithThreshold)), direction,
                     threshold_ranks(set, threshold), set.size(), seed);
}

// Farthest-point greedy on label cosine: a seeded start, then repeatedly the
// item whose maximum similarity to the selection is smallest (lowest index on
// ties). Throws if m items with all pairwise cosines below threshold cannot be
// selected this way.
inline std::vector<std::size_t> select_dissimilar_subset(const EmbeddingMatrix& labels, std::size_t m,
                                                         double threshold, std::uint64_t seed) {
  const std::size_t N = labels.rows;
  if (m == 0 || m > N)
    throw ConfigError("dissimilar subset size " + std::to_string(m) + " must lie in [1, " + std::to_string(N) + "]");
  SplitMix64 rng = stream(seed, "dissimilar-subset");
  std::vector<std::size_t> chosen{static_cast<std::size_t>(rng.below(N))};
  std::vector<bool> taken(N, false);
  taken[chosen[0]] = true;
  std::vector<double> max_sim(N, -2.0);
  auto update = [&](std::size_t added) {
    for (std::size_t j = 0; j < N; ++j)
      if (!taken[j]) max_sim[j] = std::max(max_sim[j], cosine(labels.row(j), labels.row(added), labels.dim));
  };
  update(chosen[0]);
  while (chosen.size() < m) {
    std::size_t best = N;
    for (std::size_t j = 0; j < N; ++j)
      if (!taken[j] && (best == N || max_sim[j] < max_sim[best])) best = j;
    if (max_sim[best] >= threshold)
      throw ConfigError("dissimilar subset: cannot select " + std::to_string(m) + " items with pairwise label cosine < " +
                  std::to_string(threshold) + " (stopped at " + std::to_string(chosen.size()) + ")");
    taken[best] = true;
    chosen.push_back(best);
    update(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline RetrievalReport protocol_dissimilar_subset(const RetrievalSet& set, const std::string& direction,
                                                  std::size_t m, double threshold, std::uint64_t seed) {
  set.validate();
  const auto idx = select_dissimilar_subset(set.labels, m, threshold, seed);
  RetrievalReport rep = protocol_all(set.subset(idx), direction, seed);
  rep.protocol = std::string(protocol_name(Protocol::kDissimilarSubset));
  return rep;
}

// Per repetition: seeded shuffle, disjoint batches of b (remainder dropped),
// metrics within each batch; reported values are means over all batches.
inline RetrievalReport protocol_small_batches(const RetrievalSet& set, const std::string& direction,
                                              std::size_t batch_size, std::size_t repetitions, std::uint64_t seed) {
  set.validate();
  const std::size_t N = set.size();
  if (batch_size < 2) throw ConfigError("small batches: batch size must be at least 2");
  if (batch_size > N)
    throw ConfigError("small batches: batch size " + std::to_string(batch_size) + " exceeds " + std::to_string(N) +
                      " items");
  if (repetitions == 0) throw ConfigError("small batches: repetitions must be positive");
  RetrievalReport rep;
  rep.protocol = std::string(protocol_name(Protocol::kSmallBatches));
  rep.direction = direction;
  rep.gallery_size = batch_size;
  rep.seed = seed;
  std::size_t batches = 0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    std::vector<std::size_t> order = identity_index(N);
    SplitMix64 rng = stream(seed, "small-batches", r);
    shuffle(order, rng);
    for (std::size_t start = 0; start + batch_size <= N; start += batch_size) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
      const RetrievalSet sub = set.subset(idx);
      const auto ranks = rank_queries(sub.queries, sub.gallery, identity_index(batch_size), sub.ids);
      for (std::size_t i = 0; i < kRecallRanks.size(); ++i) rep.recall[i] += recall_at_k(ranks, kRecallRanks[i]);
      rep.medr += medr(ranks);
      ++batches;
    }
  }
  for (auto& v : rep.recall) v /= static_cast<double>(batches);
  rep.medr /= static_cast<double>(batches);
  return rep;
}

inline RetrievalReport run_protocol(Protocol p, const RetrievalSet& set, const std::string& direction,
                                    const ProtocolConfig& cfg) {
  cfg.validate();
  switch (p) {
    case Protocol::kAll: return protocol_all(set, direction, cfg.seed);
    case Protocol::kAllWithThreshold: return protocol_all_with_threshold(set, direction, cfg.threshold, cfg.seed);
    case Protocol::kDissimilarSubset:
      return protocol_dissimilar_subset(set, direction, cfg.subset_size, cfg.threshold, cfg.seed);
    case Protocol::kSmallBatches:
      return protocol_small_batches(set, direction, cfg.batch_size, cfg.repetitions, cfg.seed);
  }
  throw ConfigError("unknown protocol");
}

}  // namespace trimodal
