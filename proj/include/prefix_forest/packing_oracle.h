// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive ground truth for the packing problem on small trees. Nothing here
// shares code with the DP packers beyond the tree and plan types.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

inline constexpr size_t kOracleMaxLeaves = 8;
inline constexpr size_t kOracleMaxNodes = 16;

// Tokens of the union of root-to-leaf paths, each node counted once.
// Throws InputError for unknown ids.
Tokens group_cost(const TrajectoryTree& tree, std::span<const std::string> leaf_ids);

struct OracleResult {
  Tokens cost = 0;
  PackPlan plan;
};

// Enumerates every set partition of the leaves (restricted-growth strings).
// Ties: fewest groups, then the lexicographically smallest id grouping.
// Throws TooManyLeaves above kOracleMaxLeaves, InfeasibleLeaf if nothing fits.
OracleResult brute_force_optimal(const TrajectoryTree& tree, Capacity cap);

// Maximum single-path savings over every feasible antichain whose subtrees
// partition the leaves. Throws TooManyNodes above kOracleMaxNodes.
Tokens brute_force_antichain(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap);

enum class ViolationKind {
  kEmptyTraversal,
  kUnknownLeaf,
  kDuplicateLeaf,
  kUncoveredLeaf,
  kNodeSetMismatch,
  kAnchorMismatch,
  kCostMismatch,
  kCapacityExceeded,
  kTotalCostMismatch,
  kSavingsMismatch,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int traversal = -1;  // -1 for plan-level violations
  std::string detail;
};

// Empty iff the plan partitions the leaves, every traversal fits, and all
// recorded costs agree with the plan's cost model.
std::vector<Violation> validate_plan(const TrajectoryTree& tree, const PackPlan& plan, Capacity cap);

}  // namespace prefix_forest
