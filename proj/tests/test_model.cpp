#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "trimodal/model.hpp"

using namespace trimodal;

namespace {

void sharpen(Model<double>& m, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (auto& [name, t] : m.parameters()) {
    if (name == "log_temperature") continue;
    for (auto& v : t->values) v += rng.normal(0.0, 0.2);
  }
}

std::vector<const TriModalSample*> first(const std::vector<TriModalSample>& v, std::size_t n) {
  std::vector<const TriModalSample*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&v[i]);
  return out;
}

}  // namespace

TEST(TotalLoss, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto gen = fixtures::tiny_generator(20 + seed);
    const Dataset d = generate(gen);
    for (auto mode : {FusionMode::kJoint, FusionMode::kSummed}) {
      auto m = fixtures::tiny_model(gen, seed, mode);
      sharpen(m, seed);
      const auto batch = first(d.train, 4);
      Graph<double> g;
      const auto got = total_loss(g, m, batch, LossConfig{0.7, 0.1, ModalityMode::kThreeModal}).breakdown;
      const auto want = oracle::total_loss(m, batch, 0.7, 0.1, true);
      EXPECT_NEAR(got.l_mt, want.align.l_mt, 1e-9);
      EXPECT_NEAR(got.l_mv, want.align.l_mv, 1e-9);
      EXPECT_NEAR(got.l_tv, want.align.l_tv, 1e-9);
      EXPECT_NEAR(got.l_recon, want.l_recon, 1e-9);
      EXPECT_NEAR(got.l_total, want.l_total, 1e-9);
    }
  }
}

TEST(TotalLoss, TwoModalMatchesScalarOracle) {
  const auto gen = fixtures::tiny_generator(5);
  const Dataset d = generate(gen);
  auto m = fixtures::tiny_model(gen, 2);
  sharpen(m, 2);
  const auto batch = first(d.train, 5);
  Graph<double> g;
  const auto got = total_loss(g, m, batch, LossConfig{0.8, 0.3, ModalityMode::kTwoModal}).breakdown;
  const auto want = oracle::total_loss(m, batch, 0.8, 0.3, false);
  EXPECT_EQ(got.l_align, got.l_mt);
  EXPECT_NEAR(got.l_total, want.l_total, 1e-9);
}

TEST(TotalLoss, ReconstructionWeight) {
  const auto gen = fixtures::tiny_generator(6);
  const Dataset d = generate(gen);
  auto m = fixtures::tiny_model(gen, 3);
  const auto batch = first(d.train, 4);
  Graph<double> g0;
  const auto zero = total_loss(g0, m, batch, LossConfig{0.8, 0.0}).breakdown;
  EXPECT_EQ(zero.l_total, zero.l_align);
  Graph<double> g1;
  const auto b = total_loss(g1, m, batch, LossConfig{0.8, 0.1}).breakdown;
  EXPECT_NEAR(b.l_total, b.l_align + 0.1 * b.l_recon, 1e-12);
  Graph<double> g2;
  EXPECT_THROW(total_loss(g2, m, batch, LossConfig{0.8, -1.0}), ConfigError);
}

TEST(TotalLoss, TwoModalLeavesVideoWithoutGradient) {
  const auto gen = fixtures::tiny_generator(7);
  const Dataset d = generate(gen);
  auto m = fixtures::tiny_model(gen, 4);
  m.zero_grad();
  Graph<double> g;
  g.backward(total_loss(g, m, first(d.train, 4), LossConfig{0.8, 0.1, ModalityMode::kTwoModal}).total);
  bool text_has_grad = false;
  for (auto& [name, t] : m.parameters()) {
    const bool any = std::any_of(t->grad.begin(), t->grad.end(), [](double x) { return x != 0.0; });
    if (name.rfind("video.", 0) == 0) {
      EXPECT_FALSE(any) << name;
    }
    if (name.rfind("text.", 0) == 0) text_has_grad = text_has_grad || any;
  }
  EXPECT_TRUE(text_has_grad);
}

TEST(Model, ParameterNamesAreUniqueAndStable) {
  const auto gen = fixtures::tiny_generator(1);
  auto a = fixtures::tiny_model(gen, 9);
  auto b = fixtures::tiny_model(gen, 9);
  std::set<std::string> names;
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(names.insert(pa[i].first).second) << pa[i].first;
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_EQ(pa[i].second->values, pb[i].second->values);
  }
  EXPECT_EQ(pa.back().first, "log_temperature");
  EXPECT_NEAR(std::exp(a.log_temperature.values[0]), kInitTemperature, 1e-15);
}

TEST(Model, CastPreservesValues) {
  const auto gen = fixtures::tiny_generator(1);
  auto m = fixtures::tiny_model(gen, 9);
  auto f = cast_model<float>(m);
  auto back = cast_model<double>(f);
  auto pm = m.parameters();
  auto pf = f.parameters();
  auto pb = back.parameters();
  for (std::size_t i = 0; i < pm.size(); ++i)
    for (std::size_t k = 0; k < pm[i].second->values.size(); ++k) {
      EXPECT_EQ(pf[i].second->values[k], static_cast<float>(pm[i].second->values[k]));
      EXPECT_EQ(pb[i].second->values[k], static_cast<double>(pf[i].second->values[k]));
    }
}

TEST(Model, EmbedMatchesBatchEncoding) {
  const auto gen = fixtures::tiny_generator(2);
  const Dataset d = generate(gen);
  auto m = fixtures::tiny_model(gen, 9);
  const auto ptrs = pointers(d.train);
  const auto e = embed(m, ptrs, Modality::kVideo, 5);
  EXPECT_EQ(e.rows, ptrs.size());
  EXPECT_EQ(e.dim, 8u);
  Graph<double> g;
  const auto direct = encode_batch(g, m, ptrs, Modality::kVideo).value();
  EXPECT_EQ(e.values, direct);
}
