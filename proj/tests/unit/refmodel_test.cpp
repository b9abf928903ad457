// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.h"
#include "prefix_forest/errors.h"
#include "prefix_forest/packer_exact.h"
#include "prefix_forest/refmodel/attention.h"
#include "prefix_forest/refmodel/model.h"
#include "prefix_forest/refmodel/verify.h"

namespace prefix_forest::refmodel {
namespace {

using testing::fig4_tree;
using testing::two_leaf_tree;

constexpr std::uint64_t kParamSeed = 2026;

// Golden values produced by run_baseline at kParamSeed with the default config.
struct Golden {
  double loss;
  double output0;
  double embedding96;
};
constexpr Golden kFixtureA = {66.335521740945353, -0.00099562989173499557, 0.038698076122785974};
constexpr Golden kFixtureB = {155.53313514605352, -0.0011763241275483218, -0.088356078829214119};
constexpr double kGoldenRel = 1e-12;

TrajectoryTree fixture_b() { return fig4_tree({0.5, 2, 1, 1, 1}); }

template <class T>
Matrix<T> random_matrix(size_t r, size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix<T> m(r, c);
  for (T& x : m.data) x = static_cast<T>(d(rng));
  return m;
}

PackPlan multi_plan(const TrajectoryTree& t, Tokens cap) { return multi_path_dp(t, annotate(t), Capacity{cap}); }

TEST(InitModel, DeterministicPerSeed) {
  const ModelConfig cfg;
  const auto a = init_model<double>(cfg, 1);
  const auto b = init_model<double>(cfg, 1);
  const auto c = init_model<double>(cfg, 2);
  EXPECT_EQ(a.embedding.data, b.embedding.data);
  EXPECT_EQ(a.layers[1].w2.data, b.layers[1].w2.data);
  EXPECT_NE(a.embedding.data, c.embedding.data);
}

TEST(InitModel, RejectsInvalidConfigs) {
  ModelConfig zero;
  zero.n_layers = 0;
  EXPECT_THROW(zero.validate(), ShapeMismatch);
  EXPECT_THROW(init_model<double>(zero, 1), ShapeMismatch);
  ModelConfig odd;
  odd.d_model = 6;
  odd.n_heads = 2;
  EXPECT_THROW(odd.validate(), ShapeMismatch);
  ModelConfig uneven;
  uneven.n_heads = 3;
  EXPECT_THROW(uneven.validate(), ShapeMismatch);
}

TEST(Attention, SingleTokenCopiesValue) {
  std::mt19937_64 rng(1);
  const auto q = random_matrix<double>(1, 4, rng), k = random_matrix<double>(1, 4, rng), v = random_matrix<double>(1, 4, rng);
  const DenseMask mask = plain_causal_mask(1);
  const auto r = attention_forward(q, k, v, mask);
  EXPECT_EQ(r.probs(0, 0), 1.0);
  EXPECT_EQ(r.out.data, v.data);
  const auto d_out = random_matrix<double>(1, 4, rng);
  const auto g = attention_backward(q, k, v, r.probs, d_out, mask);
  EXPECT_EQ(g.dv.data, d_out.data);
}

TEST(Attention, EqualScoresSplitEvenly) {
  Matrix<double> x(2, 4);
  for (size_t c = 0; c < 4; ++c) x(0, c) = x(1, c) = 0.25 * static_cast<double>(c);
  const auto r = attention_forward(x, x, x, plain_causal_mask(2));
  EXPECT_DOUBLE_EQ(r.probs(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.probs(1, 1), 0.5);
  EXPECT_EQ(r.probs(0, 1), 0.0);
}

TEST(Attention, ZeroUpstreamGradientGivesZero) {
  std::mt19937_64 rng(2);
  const auto q = random_matrix<double>(3, 4, rng), k = random_matrix<double>(3, 4, rng), v = random_matrix<double>(3, 4, rng);
  const DenseMask mask = plain_causal_mask(3);
  const auto r = attention_forward(q, k, v, mask);
  const auto g = attention_backward(q, k, v, r.probs, Matrix<double>(3, 4), mask);
  for (const auto* m : {&g.dq, &g.dk, &g.dv}) {
    for (double x : m->data) EXPECT_EQ(x, 0.0);
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  using T = long double;
  std::mt19937_64 rng(3);
  const size_t n = 5, d = 4;
  Matrix<T> q = random_matrix<T>(n, d, rng), k = random_matrix<T>(n, d, rng), v = random_matrix<T>(n, d, rng);
  const Matrix<T> c = random_matrix<T>(n, d, rng);
  // Tree-shaped mask: tokens 3 and 4 branch off after token 1.
  DenseMask mask{n, std::vector<std::uint8_t>(n * n, 0)};
  const std::vector<std::vector<size_t>> visible = {{0}, {0, 1}, {0, 1, 2}, {0, 1, 3}, {0, 1, 3, 4}};
  for (size_t i = 0; i < n; ++i) {
    for (size_t j : visible[i]) mask.bits[i * n + j] = 1;
  }
  auto loss = [&]() {
    const auto r = attention_forward(q, k, v, mask);
    T s = 0;
    for (size_t i = 0; i < r.out.data.size(); ++i) s += c.data[i] * r.out.data[i];
    return s;
  };
  const auto r = attention_forward(q, k, v, mask);
  const auto g = attention_backward(q, k, v, r.probs, c, mask);
  const T eps = 1e-6L;
  for (auto [x, dx] : {std::pair{&q, &g.dq}, std::pair{&k, &g.dk}, std::pair{&v, &g.dv}}) {
    for (size_t i = 0; i < x->data.size(); ++i) {
      const T orig = x->data[i];
      x->data[i] = orig + eps;
      const T up = loss();
      x->data[i] = orig - eps;
      const T down = loss();
      x->data[i] = orig;
      const double fd = static_cast<double>((up - down) / (2 * eps));
      const double an = static_cast<double>(dx->data[i]);
      EXPECT_LE(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}), 1e-6) << i;
    }
  }
}

TEST(Rope, PositionZeroIsIdentityAndInverseRecovers) {
  std::mt19937_64 rng(4);
  const auto x = random_matrix<double>(6, 8, rng);
  const std::vector<Tokens> zeros(6, 0);
  EXPECT_EQ(rope_apply(x, zeros, 10000.0).data, x.data);
  const std::vector<Tokens> pos = {0, 3, 17, 100, 2047, 5};
  const auto back = rope_backward(rope_apply(x, pos, 10000.0), pos, 10000.0);
  for (size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(back.data[i], x.data[i], 1e-14);
  const std::vector<Tokens> odd = {1, 2};
  EXPECT_THROW(rope_apply(x, odd, 10000.0), ShapeMismatch);
}

TEST(Rope, SamePositionGivesSameRotation) {
  Matrix<double> x(2, 4);
  for (size_t c = 0; c < 4; ++c) x(0, c) = x(1, c) = 1.0 + static_cast<double>(c);
  const std::vector<Tokens> pos = {7, 7};
  const auto y = rope_apply(x, pos, 10000.0);
  for (size_t c = 0; c < 4; ++c) EXPECT_EQ(y(0, c), y(1, c));
}

TEST(Forward, LossIsTheWeightedCrossEntropySum) {
  const TrajectoryTree t = fixture_b();
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  double expected = 0.0;
  for (LeafIndex l = 0; l < static_cast<LeafIndex>(t.leaf_count()); ++l) {
    const PackedBatch b = baseline_emit(t, l);
    const ForwardResult<double> f = forward(params, b);
    for (size_t i = 0; i < b.size(); ++i) {
      if (!b.supervised_mask[i]) continue;
      double mx = -INFINITY;
      for (size_t c = 0; c < f.logits.cols; ++c) mx = std::max(mx, f.logits(i, c));
      double z = 0.0;
      for (size_t c = 0; c < f.logits.cols; ++c) z += std::exp(f.logits(i, c) - mx);
      expected += t.leaf(l).weight * (mx + std::log(z) - f.logits(i, static_cast<size_t>(*b.labels[i])));
    }
  }
  const double got = run_baseline(t, params).loss;
  EXPECT_NEAR(got, expected, 1e-12 * expected);
  const double tree = run_tree(t, full_tree_plan(t), params).loss;
  EXPECT_LE(std::abs(tree - got) / got, 1e-10);
}

TEST(Forward, RejectsTokensOutsideTheVocabulary) {
  ModelConfig small;
  small.vocab = 10;
  const auto params = init_model<double>(small, 1);
  const TrajectoryTree t = fig4_tree();
  EXPECT_NO_THROW(forward(params, baseline_emit(t, t.leaf_index("leaf1"))));
  EXPECT_THROW(forward(params, baseline_emit(t, t.leaf_index("leaf5"))), InputError);
}

TEST(Backward, ZeroLossWeightsGiveZeroGradients) {
  const TrajectoryTree t = fig4_tree({0, 0, 0, 0, 0});
  const auto r = run_tree(t, full_tree_plan(t), init_model<double>(ModelConfig{}, kParamSeed));
  EXPECT_EQ(r.loss, 0.0);
  r.grads.visit([](const std::string& name, const Matrix<double>& m) {
    for (double x : m.data) ASSERT_EQ(x, 0.0) << name;
  });
}

TEST(Backward, MatchesFiniteDifferencesInBinary128) {
  const TrajectoryTree t = fixture_b();
  const PackPlan plan = multi_plan(t, 14);
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const auto r = run_tree(t, plan, params);
  std::mt19937_64 rng(5);
  for (const auto& s : testing::finite_difference_check(t, plan, params, r.grads, 20, rng)) {
    EXPECT_LE(s.rel_err, 1e-6) << s.param << "[" << s.index << "] analytic " << s.analytic << " numeric " << s.numeric;
  }
}

TEST(RunBaseline, GoldenFixtures) {
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  for (auto [tree, golden] : {std::pair{two_leaf_tree(), kFixtureA}, std::pair{fixture_b(), kFixtureB}}) {
    const auto r = run_baseline(tree, params);
    EXPECT_NEAR(r.loss, golden.loss, kGoldenRel * std::abs(golden.loss));
    EXPECT_NEAR(r.grads.output.data[0], golden.output0, kGoldenRel * std::abs(golden.output0));
    EXPECT_NEAR(r.grads.embedding.data[96], golden.embedding96, kGoldenRel * std::abs(golden.embedding96));
  }
}

TEST(RunTree, OneLeafTreeIsIdenticalToBaseline) {
  const TrajectoryTree t = build_forest(std::vector<Trajectory>{Trajectory{"only", {4, 5, 6, 7}, 1.5, 1}});
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const GradReport g = compare_grads(run_tree(t, full_tree_plan(t), params).grads, run_baseline(t, params).grads, 0.0);
  EXPECT_EQ(g.max_abs_err, 0.0);
}

TEST(RunTree, FullTreePlanMatchesBaselineOnFixtureA) {
  const TrajectoryTree t = two_leaf_tree();
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const GradReport g = compare_grads(run_tree(t, full_tree_plan(t), params).grads, run_baseline(t, params).grads, 1e-9);
  EXPECT_TRUE(g.pass) << g.param << " " << g.max_rel_err;
}

TEST(RunTree, SplitPlansMatchBaselineOnFixtureB) {
  const TrajectoryTree t = fixture_b();
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const auto base = run_baseline(t, params);
  const TreeAnnotations a = annotate(t);
  for (const PackPlan& plan : {multi_plan(t, 14), reconstruct_plan(single_path_dp(t, a, Capacity{14}), t)}) {
    ASSERT_GT(plan.traversals.size(), 1u);
    const GradReport g = compare_grads(run_tree(t, plan, params).grads, base.grads, 1e-9);
    EXPECT_TRUE(g.pass) << plan.method << " " << g.param << " " << g.max_rel_err;
  }
}

TEST(RunTree, NonUniformWeightsStillMatch) {
  TreeSpec root;
  root.segment = {11, 12, 13};
  root.children = {testing::leaf_spec({20, 21}, "p", 0.5), testing::leaf_spec({30, 31, 32}, "q", 2.0),
                   testing::leaf_spec({40}, "r", 1.0)};
  const TrajectoryTree t = TrajectoryTree::from_spec(root);
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const VerifyReport r = verify(t, full_tree_plan(t), params);
  EXPECT_TRUE(r.pass) << r.grads.param << " " << r.grads.max_rel_err;
}

TEST(CompareGrads, ReportsTheWorstEntry) {
  const auto a = init_model<double>(ModelConfig{}, 1);
  auto b = a;
  EXPECT_EQ(compare_grads(a, b, 0.0).max_rel_err, 0.0);
  b.layers[1].w1.data[7] *= 1.5;
  const GradReport g = compare_grads(a, b, 1e-9);
  EXPECT_FALSE(g.pass);
  EXPECT_EQ(g.param, "layers.1.w1");
  EXPECT_EQ(g.index, 7u);
  EXPECT_NEAR(g.max_rel_err, 1.0 / 3.0, 1e-15);
  ModelConfig other;
  other.n_layers = 1;
  EXPECT_THROW(compare_grads(a, init_model<double>(other, 1), 1e-9), ShapeMismatch);
}

TEST(Verify, NegativeControlsAreDetected) {
  const TrajectoryTree t = fixture_b();
  const auto params = init_model<double>(ModelConfig{}, kParamSeed);
  const VerifyReport r = verify(t, multi_plan(t, 14), params);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.prefix_max_abs, 1e-12);
  EXPECT_TRUE(r.scaler_paths.pass) << r.scaler_paths.max_rel_err;
  ASSERT_TRUE(r.scaler_control.applicable);
  ASSERT_TRUE(r.mask_control.applicable);
  EXPECT_TRUE(r.scaler_control.detected);
  EXPECT_TRUE(r.mask_control.detected);

  VerifyOptions disabled;
  disabled.run.scaler = ScalerMode::kDisabled;
  EXPECT_FALSE(verify(t, full_tree_plan(t), params, disabled).grads.pass);
  VerifyOptions plain;
  plain.run.mask = MaskMode::kPlainCausal;
  EXPECT_FALSE(verify(t, full_tree_plan(t), params, plain).prefix_pass);
}

TEST(Verify, Float32RunIsReportedWithRelaxedLossTolerance) {
  const TrajectoryTree t = fixture_b();
  const auto params = cast_params<float>(init_model<double>(ModelConfig{}, kParamSeed));
  VerifyOptions opts;
  opts.tolerance = 1e-4;
  opts.loss_tolerance = 1e-4;
  const VerifyReport r = verify(t, multi_plan(t, 14), params, opts);
  EXPECT_TRUE(r.loss_pass);
  EXPECT_TRUE(r.prefix_pass);
  EXPECT_TRUE(std::isfinite(r.grads.max_rel_err));
  RecordProperty("f32_grad_max_rel_err", std::to_string(r.grads.max_rel_err));
}

}  // namespace
}  // namespace prefix_forest::refmodel
