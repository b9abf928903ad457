// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/packer_exact.h"

#include <gtest/gtest.h>

#include <random>

#include "fixtures.h"
#include "prefix_forest/errors.h"
#include "prefix_forest/packing_oracle.h"
#include "prefix_forest/synthetic.h"

namespace prefix_forest {
namespace {

using testing::leaf_spec;
using testing::star_tree;

// r(2) -> u(2) -> {v1(1), v2(1)}
TrajectoryTree chain_tree() {
  TreeSpec u;
  u.segment = {3, 4};
  u.children = {leaf_spec({5}, "v1"), leaf_spec({6}, "v2")};
  TreeSpec r;
  r.segment = {1, 2};
  r.children = {u};
  return TrajectoryTree::from_spec(r);
}

// r(3) -> u(2) -> {v1(2) -> {l1, l2}, v5(2) -> {l3, l4}}, every leaf segment 2.
TrajectoryTree two_branch_tree() {
  TreeSpec v1;
  v1.segment = {6, 7};
  v1.children = {leaf_spec({10, 11}, "l1"), leaf_spec({12, 13}, "l2")};
  TreeSpec v5;
  v5.segment = {8, 9};
  v5.children = {leaf_spec({14, 15}, "l3"), leaf_spec({16, 17}, "l4")};
  TreeSpec u;
  u.segment = {4, 5};
  u.children = {v1, v5};
  TreeSpec r;
  r.segment = {1, 2, 3};
  r.children = {u};
  return TrajectoryTree::from_spec(r);
}

Tokens single_cost(const TrajectoryTree& t, Tokens cap) {
  return reconstruct_plan(single_path_dp(t, annotate(t), Capacity{cap}), t).total_cost;
}

TEST(Feasible, StarBoundary) {
  const TrajectoryTree t = star_tree();
  const TreeAnnotations a = annotate(t);
  EXPECT_TRUE(feasible(0, a, Capacity{12}));
  EXPECT_FALSE(feasible(0, a, Capacity{11}));
  for (const Leaf& l : t.leaves()) EXPECT_TRUE(feasible(l.node, a, Capacity{a.depth(l.node)}));
}

TEST(SinglePathDp, StarFitsWhole) {
  const TrajectoryTree t = star_tree();
  const SinglePathSolution s = single_path_dp(t, annotate(t), Capacity{12});
  EXPECT_EQ(s.savings, 5);
  EXPECT_EQ(s.selected, (std::vector<NodeId>{0}));
}

TEST(SinglePathDp, StarOneBelowPacksLeavesAlone) {
  const TrajectoryTree t = star_tree();
  const SinglePathSolution s = single_path_dp(t, annotate(t), Capacity{11});
  EXPECT_EQ(s.savings, 0);
  EXPECT_EQ(s.selected, (std::vector<NodeId>{1, 2}));
}

TEST(SinglePathDp, ChainSelectsTheInnerNode) {
  const TrajectoryTree t = chain_tree();
  const SinglePathSolution s = single_path_dp(t, annotate(t), Capacity{7});
  EXPECT_EQ(s.savings, 4);
  EXPECT_EQ(s.selected, (std::vector<NodeId>{1}));
}

TEST(SinglePathDp, InfeasibleLeafThrows) {
  const TrajectoryTree t = star_tree();
  EXPECT_THROW(single_path_dp(t, annotate(t), Capacity{8}), InfeasibleLeaf);
}

TEST(ReconstructPlan, CostsFollowTheSinglePathModel) {
  const TrajectoryTree t = star_tree();
  const PackPlan whole = reconstruct_plan(single_path_dp(t, annotate(t), Capacity{12}), t);
  ASSERT_EQ(whole.traversals.size(), 1u);
  EXPECT_EQ(whole.traversals[0].cost, 12);
  EXPECT_EQ(whole.cost_model, CostModel::kSinglePath);
  const PackPlan alone = reconstruct_plan(single_path_dp(t, annotate(t), Capacity{11}), t);
  ASSERT_EQ(alone.traversals.size(), 2u);
  EXPECT_EQ(alone.traversals[0].cost, 8);
  EXPECT_EQ(alone.traversals[1].cost, 9);
  EXPECT_EQ(alone.total_cost, linear_token_total(t) - alone.savings);
}

TEST(MultiPathDp, StarWholeTree) {
  const TrajectoryTree t = star_tree();
  const PackPlan p = multi_path_dp(t, annotate(t), Capacity{12});
  ASSERT_EQ(p.traversals.size(), 1u);
  EXPECT_EQ(p.total_cost, 12);
  EXPECT_EQ(p.traversals[0].leaves.size(), 2u);
}

TEST(MultiPathDp, StarSplit) {
  const TrajectoryTree t = star_tree();
  const PackPlan p = multi_path_dp(t, annotate(t), Capacity{9});
  ASSERT_EQ(p.traversals.size(), 2u);
  EXPECT_EQ(p.total_cost, 17);
}

TEST(MultiPathDp, BeatsSinglePathWhenBranchesShareOneBin) {
  const TrajectoryTree t = two_branch_tree();
  const PackPlan p = multi_path_dp(t, annotate(t), Capacity{17});
  EXPECT_EQ(p.total_cost, 17);
  EXPECT_EQ(p.total_cost, brute_force_optimal(t, Capacity{17}).cost);
  EXPECT_EQ(single_cost(t, 17), 22);
}

TEST(MultiPathDp, WideNodeExceedsExactLimits) {
  TreeSpec root;
  root.segment = {1};
  for (int i = 0; i < 13; ++i) root.children.push_back(leaf_spec({10 + i, 50}, "l" + std::to_string(i)));
  const TrajectoryTree t = TrajectoryTree::from_spec(root);
  EXPECT_THROW(multi_path_dp(t, annotate(t), Capacity{8}), ExactModeLimitExceeded);
  ExactLimits loose;
  loose.max_items = 13;
  EXPECT_EQ(multi_path_dp(t, annotate(t), Capacity{40}, loose).total_cost, tree_token_total(t));
}

TEST(MultiPathDp, StateLimitIsEnforced) {
  std::mt19937_64 rng(9);
  RandomTreeOptions opts;
  opts.min_leaves = 8;
  const TrajectoryTree t = random_tree(rng, opts);
  const TreeAnnotations a = annotate(t);
  ExactLimits tiny;
  tiny.max_states = 1;
  EXPECT_THROW(multi_path_dp(t, a, Capacity{testing::max_leaf_length(t, a) + 1}, tiny), ExactModeLimitExceeded);
}

TEST(Property, ExactPackersMatchTheOracles) {
  for (const testing::PackingCase& c : testing::packing_corpus(11, 200)) {
    const TreeAnnotations a = annotate(c.tree);
    const Capacity cap{c.capacity};
    const PackPlan multi = multi_path_dp(c.tree, a, cap);
    ASSERT_EQ(multi.total_cost, brute_force_optimal(c.tree, cap).cost);
    EXPECT_TRUE(validate_plan(c.tree, multi, cap).empty());

    const SinglePathSolution s = single_path_dp(c.tree, a, cap);
    ASSERT_EQ(s.savings, brute_force_antichain(c.tree, a, cap));
    const PackPlan single = reconstruct_plan(s, c.tree);
    EXPECT_TRUE(validate_plan(c.tree, single, cap).empty());
    EXPECT_EQ(single.total_cost, linear_token_total(c.tree) - s.savings);

    EXPECT_LE(multi.total_cost, single.total_cost);
    EXPECT_LE(single.total_cost, linear_token_total(c.tree));
    EXPECT_GE(multi.total_cost, tree_token_total(c.tree));
    if (tree_token_total(c.tree) <= c.capacity) {
      EXPECT_EQ(multi.total_cost, tree_token_total(c.tree));
    }
  }
}

TEST(Property, PruningDoesNotChangeTheOptimum) {
  ExactLimits off;
  off.dominance_pruning = false;
  off.max_states = 1'000'000;
  for (const testing::PackingCase& c : testing::packing_corpus(12, 100)) {
    const TreeAnnotations a = annotate(c.tree);
    EXPECT_EQ(multi_path_dp(c.tree, a, Capacity{c.capacity}).total_cost,
              multi_path_dp(c.tree, a, Capacity{c.capacity}, off).total_cost);
  }
}

TEST(Property, CostIsMonotoneInCapacity) {
  for (const testing::PackingCase& c : testing::packing_corpus(13, 60)) {
    const TreeAnnotations a = annotate(c.tree);
    Tokens prev_multi = linear_token_total(c.tree) + 1;
    Tokens prev_single = prev_multi;
    for (Tokens cap = testing::max_leaf_length(c.tree, a); cap <= tree_token_total(c.tree) + 2; ++cap) {
      const Tokens m = multi_path_dp(c.tree, a, Capacity{cap}).total_cost;
      const Tokens s = single_cost(c.tree, cap);
      EXPECT_LE(m, prev_multi);
      EXPECT_LE(s, prev_single);
      prev_multi = m;
      prev_single = s;
    }
  }
}

}  // namespace
}  // namespace prefix_forest
