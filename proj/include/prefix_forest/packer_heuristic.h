// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

// Leaves are visited depth-first. At every node the subtrees (and leaves
// ending there) are ordered deepest-bucket first, where a bucket spans
// max(1, ceil(C / 8)) tokens of leaf depth, then by exact depth, then by
// smallest leaf id. Leaves are appended greedily to the current traversal; a
// new traversal starts when the next leaf's uncovered path would exceed C.
// Throws InfeasibleLeaf.
PackPlan heuristic_pack(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap);

// Depth bucket width used by heuristic_pack.
Tokens depth_bucket_width(Capacity cap);

}  // namespace prefix_forest
