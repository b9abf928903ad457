// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

// Token budget per packed batch.
struct Capacity {
  Tokens tokens = 0;
};

// How a traversal is charged.
enum class CostModel {
  // Every node of the induced subtree is computed once per traversal.
  kSharedSubtree,
  // Only the path to the anchor node is shared; the residual paths below it
  // are linearized, one copy per leaf.
  kSinglePath,
};

struct Traversal {
  std::vector<LeafIndex> leaves;  // sorted by leaf id
  std::vector<NodeId> nodes;      // union of root-to-leaf paths, preorder
  Tokens cost = 0;
  std::optional<NodeId> anchor;   // set for single-path traversals
};

struct PackPlan {
  std::string method;
  CostModel cost_model = CostModel::kSharedSubtree;
  Tokens capacity = 0;
  std::vector<Traversal> traversals;
  Tokens total_cost = 0;
  Tokens savings = 0;
};

// Throws InfeasibleLeaf when some leaf alone exceeds the capacity.
void require_packable(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap);

// Sum of segment lengths over the union of root-to-leaf paths (each node once).
Tokens shared_subtree_cost(const TrajectoryTree& tree, const std::vector<LeafIndex>& leaves);

// Builds a traversal with canonical leaf order and the induced node set.
// Cost is charged with the shared-subtree model unless an anchor is given.
Traversal make_traversal(const TrajectoryTree& tree, const TreeAnnotations& ann,
                         std::vector<LeafIndex> leaves, std::optional<NodeId> anchor = std::nullopt);

// Sorts traversals canonically and fills total_cost and savings.
void finish_plan(const TrajectoryTree& tree, PackPlan& plan);

// 1 - total_cost / linear_token_total.
double effective_reuse_ratio(const PackPlan& plan, const TrajectoryTree& tree);

}  // namespace prefix_forest
