#pragma once

// Seeded tri-modal dataset generator.
//
// Each sample draws an action concept c (round-robin over sample ids) and a
// style k. Its label embedding is normalize(z_c + variant_spread * s_k), with
// z_c and s_k unit vectors from their own streams, so samples sharing a concept
// but not a style have cosine near 1 / (1 + spread^2).
//   motion: velocity_t = A z + B z sin(omega t); P_t = step * cumsum(velocity)
//           plus N(0, motion_noise^2)
//   text:   the concept's base phrase followed by the style's modifier token,
//           each token replaced by a uniform draw with text_substitution rate
//   video:  R P_idx(f) for l_v uniformly spaced rows idx(f), plus
//           N(0, video_noise^2) (R is the fixed "renderer")
// A, B and R are fixed per seed. Everything is a pure function of the config.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/rng.hpp"
#include "trimodal/types.hpp"

namespace trimodal {

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t n_samples = 672;
  std::size_t n_concepts = 16;
  std::size_t latent_dim = 32;  // C_gt
  std::size_t vocab_size = 64;
  std::size_t texts_per_concept = 4;  // styles; one modifier token each
  double variant_spread = 0.42;
  std::size_t motion_len_min = 8;
  std::size_t motion_len_max = 16;
  std::size_t motion_features = 12;  // c_m
  std::size_t video_features = 16;   // c_v
  std::size_t frames_per_video = 8;  // l_v
  std::size_t phrase_len_min = 3;
  std::size_t phrase_len_max = 5;
  double motion_noise = 0.05;
  double video_noise = 0.05;
  double text_substitution = 0.05;
  double train_fraction = 0.80;
  double val_fraction = 0.05;
  // Explicit split sizes; when all three are zero the fractions apply.
  std::size_t n_train = 512;
  std::size_t n_val = 32;
  std::size_t n_test = 128;

  std::size_t max_text_len() const { return phrase_len_max + 1; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("generator config: " + m); };
    if (n_samples == 0) fail("n_samples must be positive");
    if (n_concepts == 0 || n_concepts > n_samples) fail("n_concepts must lie in [1, n_samples]");
    if (latent_dim == 0) fail("latent_dim must be positive");
    if (vocab_size < 2) fail("vocab_size must be at least 2");
    if (texts_per_concept == 0) fail("texts_per_concept must be positive");
    if (motion_len_min < 2) fail("motion_len_min must be at least 2");
    if (motion_len_max < motion_len_min) fail("motion_len_max must be >= motion_len_min");
    if (motion_features == 0 || video_features == 0) fail("feature widths must be positive");
    if (frames_per_video == 0) fail("frames_per_video must be positive");
    if (phrase_len_min == 0 || phrase_len_max < phrase_len_min) fail("phrase length range is invalid");
    if (!(motion_noise >= 0) || !(video_noise >= 0)) fail("noise levels must be >= 0");
    if (!(text_substitution >= 0 && text_substitution <= 1)) fail("text_substitution must lie in [0, 1]");
    if (!(variant_spread >= 0)) fail("variant_spread must be >= 0");
    const bool explicit_split = n_train + n_val + n_test > 0;
    if (explicit_split && n_train + n_val + n_test != n_samples)
      fail("n_train + n_val + n_test must equal n_samples");
    if (!explicit_split &&
        !(train_fraction >= 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1))
      fail("split fractions must be nonnegative and sum to at most 1");
  }

  // (train, val, test) sizes.
  std::array<std::size_t, 3> split_sizes() const {
    if (n_train + n_val + n_test > 0) return {n_train, n_val, n_test};
    const auto tr = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples)));
    const auto va = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n_samples)));
    return {tr, va, n_samples - tr - va};
  }
};

struct DatasetSplit {
  std::vector<std::uint64_t> train, val, test;
};

struct Dataset {
  GeneratorConfig config;
  std::vector<TriModalSample> train, val, test;

  DatasetSplit split() const {
    DatasetSplit s;
    for (const auto& x : train) s.train.push_back(x.id);
    for (const auto& x : val) s.val.push_back(x.id);
    for (const auto& x : test) s.test.push_back(x.id);
    return s;
  }

  bool operator==(const Dataset& o) const { return train == o.train && val == o.val && test == o.test; }
};

inline std::vector<const TriModalSample*> pointers(const std::vector<TriModalSample>& v) {
  std::vector<const TriModalSample*> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(&s);
  return out;
}

namespace synth_detail {

inline std::vector<double> unit_normal(SplitMix64& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0;
  for (auto& x : v) {
    x = rng.normal();
    s += x * x;
  }
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
  return v;
}

// rows x cols matrix of N(0, 1/cols) entries.
inline std::vector<double> gaussian_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> m(rows * cols);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  for (auto& x : m) x = rng.normal(0.0, sd);
  return m;
}

}  // namespace synth_detail

inline constexpr double kMotionStep = 0.25;
inline constexpr double kMotionOmega = 0.6;

// Fixed linear renderer R (c_v x c_m) that turns pose features into frame features.
inline std::vector<double> render_matrix(const GeneratorConfig& c) {
  SplitMix64 rng = stream(c.seed, "renderer");
  return synth_detail::gaussian_matrix(rng, c.video_features, c.motion_features);
}

// Motion rows sampled for frame f of l_v.
inline std::size_t frame_source_row(std::size_t f, std::size_t frames_per_video, std::size_t motion_len) {
  if (frames_per_video == 1) return 0;
  const double pos = static_cast<double>(f) * static_cast<double>(motion_len - 1) /
                     static_cast<double>(frames_per_video - 1);
  return static_cast<std::size_t>(std::lround(pos));
}

// frame = R * motion row, accumulated in double and rounded once to float.
inline std::vector<double> render_frame(const std::vector<double>& R, const MotionSequence& m, std::size_t row,
                                        std::size_t video_features) {
  std::vector<double> out(video_features, 0.0);
  for (std::size_t v = 0; v < video_features; ++v) {
    double acc = 0;
    for (std::size_t k = 0; k < m.features; ++k) acc += R[v * m.features + k] * static_cast<double>(m.at(row, k));
    out[v] = acc;
  }
  return out;
}

inline Dataset generate(const GeneratorConfig& c) {
  c.validate();
  using namespace synth_detail;
  const std::size_t D = c.latent_dim;

  std::vector<std::vector<double>> concepts, styles;
  for (std::size_t i = 0; i < c.n_concepts; ++i) {
    SplitMix64 r = stream(c.seed, "concept", i);
    concepts.push_back(unit_normal(r, D));
  }
  for (std::size_t k = 0; k < c.texts_per_concept; ++k) {
    SplitMix64 r = stream(c.seed, "style", k);
    styles.push_back(unit_normal(r, D));
  }

  // Text codebook: base phrase per concept, modifier token per style.
  std::vector<std::vector<int>> phrases;
  for (std::size_t i = 0; i < c.n_concepts; ++i) {
    SplitMix64 r = stream(c.seed, "phrase", i);
    const std::size_t len = c.phrase_len_min + r.below(c.phrase_len_max - c.phrase_len_min + 1);
    std::vector<int> p(len);
    for (auto& t : p) t = static_cast<int>(r.below(c.vocab_size));
    phrases.push_back(std::move(p));
  }
  std::vector<int> modifiers;
  {
    SplitMix64 r = stream(c.seed, "modifier");
    for (std::size_t k = 0; k < c.texts_per_concept; ++k) modifiers.push_back(static_cast<int>(r.below(c.vocab_size)));
  }

  SplitMix64 basis = stream(c.seed, "motion-basis");
  const std::vector<double> A = gaussian_matrix(basis, c.motion_features, D);
  const std::vector<double> Bm = gaussian_matrix(basis, c.motion_features, D);
  const std::vector<double> R = render_matrix(c);

  std::vector<TriModalSample> all(c.n_samples);
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    SplitMix64 r = stream(c.seed, "sample", i);
    TriModalSample& s = all[i];
    s.id = i;
    s.concept_id = static_cast<int>(i % c.n_concepts);
    s.variant = static_cast<int>(r.below(c.texts_per_concept));

    std::vector<double> z(D);
    double nz = 0;
    for (std::size_t d = 0; d < D; ++d) {
      z[d] = concepts[s.concept_id][d] + c.variant_spread * styles[s.variant][d];
      nz += z[d] * z[d];
    }
    nz = std::sqrt(nz);
    if (nz < 1e-9) throw NumericalError("generate: degenerate concept latent");
    for (auto& x : z) x /= nz;
    s.concept_latent = z;

    // motion
    const std::size_t L = c.motion_len_min + r.below(c.motion_len_max - c.motion_len_min + 1);
    std::vector<double> d1(c.motion_features, 0.0), d2(c.motion_features, 0.0);
    for (std::size_t f = 0; f < c.motion_features; ++f)
      for (std::size_t d = 0; d < D; ++d) {
        d1[f] += A[f * D + d] * z[d];
        d2[f] += Bm[f * D + d] * z[d];
      }
    s.motion.frames = L;
    s.motion.features = c.motion_features;
    s.motion.values.resize(L * c.motion_features);
    std::vector<double> pos(c.motion_features, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      const double wave = std::sin(kMotionOmega * static_cast<double>(t));
      for (std::size_t f = 0; f < c.motion_features; ++f) {
        pos[f] += kMotionStep * (d1[f] + d2[f] * wave);
        const double noise = c.motion_noise > 0 ? r.normal(0.0, c.motion_noise) : 0.0;
        s.motion.values[t * c.motion_features + f] = static_cast<float>(pos[f] + noise);
      }
    }

    // text
    std::vector<int> tokens = phrases[s.concept_id];
    tokens.push_back(modifiers[s.variant]);
    for (auto& t : tokens)
      if (c.text_substitution > 0 && r.uniform01() < c.text_substitution) t = static_cast<int>(r.below(c.vocab_size));
    s.text.tokens = std::move(tokens);

    // video
    s.video.frames = c.frames_per_video;
    s.video.features = c.video_features;
    s.video.values.resize(c.frames_per_video * c.video_features);
    for (std::size_t f = 0; f < c.frames_per_video; ++f) {
      const auto frame = render_frame(R, s.motion, frame_source_row(f, c.frames_per_video, L), c.video_features);
      for (std::size_t v = 0; v < c.video_features; ++v) {
        const double noise = c.video_noise > 0 ? r.normal(0.0, c.video_noise) : 0.0;
        s.video.values[f * c.video_features + v] = static_cast<float>(frame[v] + noise);
      }
    }
  }

  std::vector<std::size_t> order(c.n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 split_rng = stream(c.seed, "split");
  shuffle(order, split_rng);
  const auto sizes = c.split_sizes();
  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(ids.begin(), ids.end());
    std::vector<TriModalSample> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(all[id]);
    return out;
  };
  Dataset ds;
  ds.config = c;
  ds.train = take(0, sizes[0]);
  ds.val = take(sizes[0], sizes[1]);
  ds.test = take(sizes[0] + sizes[1], sizes[2]);
  return ds;
}

}  // namespace trimodal
