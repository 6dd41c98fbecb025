#include <gtest/gtest.h>

#include "trimodal/grad_check.hpp"
#include "trimodal/model.hpp"
#include "trimodal/rng.hpp"
#include "fixtures.hpp"

using namespace trimodal;

TEST(GradCheck, SumOfSquaresIsExact) {
  SplitMix64 rng(3);
  Tensor<double> p = Tensor<double>::zeros({3, 4}, true);
  for (auto& v : p.values) v = rng.normal();
  auto build = [&](Graph<double>& g) {
    Var<double> x = g.param(p);
    return ad::sum_all(ad::mul(x, x));
  };
  const auto r = grad_check(build, {&p});
  EXPECT_LT(r.max_rel_error, 1e-7);
  EXPECT_EQ(r.entries_checked, 12u);
}

TEST(GradCheck, ConstantLossHasZeroError) {
  Tensor<double> p = Tensor<double>::zeros({2, 2}, true);
  auto build = [&](Graph<double>& g) {
    g.param(p);
    return g.constant({1, 1}, {4.0});
  };
  const auto r = grad_check(build, {&p});
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsAWrongBackward) {
  Tensor<double> p = Tensor<double>::zeros({1, 3}, true);
  p.values = {0.1, -0.2, 0.45};
  // y = x^2 with a backward that forgets the factor 2.
  auto build = [&](Graph<double>& g) {
    Var<double> x = g.param(p);
    Tensor<double> out = Tensor<double>::zeros({1, 3});
    for (int i = 0; i < 3; ++i) out.values[i] = p.values[i] * p.values[i];
    Var<double> y = g.push(OpKind::kMul, {x.id}, out, nullptr, [](Graph<double>& gr, std::size_t self) {
      const auto& nd = gr.node(self);
      auto& gx = gr.grad(nd.inputs[0]);
      for (int i = 0; i < 3; ++i) gx[i] += nd.out.grad[i] * gr.node(nd.inputs[0]).out.values[i];
    });
    return ad::sum_all(y);
  };
  const auto r = grad_check(build, {&p});
  EXPECT_GT(r.max_rel_error, 0.3);
  EXPECT_EQ(r.worst_entry, 2u);
}

TEST(GradCheck, FullObjectiveOnTinyBatch) {
  const auto gen = fixtures::tiny_generator(11, 12);
  const Dataset d = generate(gen);
  auto m = fixtures::tiny_model(gen, 5);
  const auto batch = std::vector<const TriModalSample*>{&d.train[0], &d.train[1], &d.train[2], &d.train[3]};
  std::vector<Tensor<double>*> params;
  for (auto& [name, t] : m.parameters()) params.push_back(t);
  auto build = [&](Graph<double>& g) { return total_loss(g, m, batch, LossConfig{0.8, 0.1}).total; };
  const auto r = grad_check(build, params);
  EXPECT_LT(r.max_rel_error, 1e-4) << "param " << m.parameters()[r.worst_param].first;
}
