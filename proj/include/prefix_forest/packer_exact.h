// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimal packing of a trajectory tree into capacity-bounded traversals.
//
// Two formulations are solved exactly:
//  * single-path: every traversal shares one root-to-node path and linearizes
//    everything below it. A tree DP picks an antichain of shared nodes.
//  * multi-path: a traversal may share any subtree. Each node keeps a set of
//    (sorted per-traversal loads below the node, cost) states. Child states are
//    lifted by the child's segment length and packed into bins of the node's
//    remaining capacity; dominated states are dropped.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

// L(u) + R(u) <= C: the shared path plus every linearized residual fits.
bool feasible(NodeId u, const TreeAnnotations& ann, Capacity cap);

struct SinglePathSolution {
  Tokens capacity = 0;
  Tokens savings = 0;
  // Antichain of shared nodes, in preorder. A selected node covers every leaf
  // of its subtree in one traversal.
  std::vector<NodeId> selected;
  // Leaves that end on an unselected node which also carries other leaves or
  // children; each is packed alone.
  std::vector<LeafIndex> singleton_leaves;
  // Best savings for covering the subtree of u; nullopt when uncoverable.
  std::vector<std::optional<Tokens>> table;
};

// Throws InfeasibleLeaf when a leaf alone does not fit.
SinglePathSolution single_path_dp(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap);

// One traversal per selected node (cost L(u) + R(u)) plus one per singleton leaf.
PackPlan reconstruct_plan(const SinglePathSolution& solution, const TrajectoryTree& tree);

struct ExactLimits {
  size_t max_items = 12;      // lifted items entering one node
  size_t max_states = 10000;  // surviving states at one node
  bool dominance_pruning = true;
};

// Minimum total cost plan; among equal costs, the fewest traversals.
// Throws InfeasibleLeaf or ExactModeLimitExceeded.
PackPlan multi_path_dp(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap,
                       const ExactLimits& limits = {});

}  // namespace prefix_forest
