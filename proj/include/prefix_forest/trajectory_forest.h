// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Trajectory tries: merging rollouts that share token prefixes into one tree,
// the per-node quantities the packers consume, and dataset overlap metrics.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prefix_forest {

using TokenId = std::int64_t;
using Tokens = std::int64_t;  // token counts and lengths
using NodeId = std::int32_t;
using LeafIndex = std::int32_t;

inline constexpr NodeId kNoNode = -1;

struct Trajectory {
  std::string id;
  std::vector<TokenId> tokens;
  double weight = 1.0;
  // First token position that contributes to the loss.
  Tokens supervised_from = 0;
};

// A trajectory terminus. Several leaves may end on the same node (identical
// trajectories) and a leaf may end on a node that still has children (one
// trajectory is a strict prefix of another).
struct Leaf {
  std::string id;
  NodeId node = kNoNode;
  double weight = 1.0;
  Tokens supervised_from = 0;
};

struct TreeNode {
  std::vector<TokenId> segment;
  NodeId parent = kNoNode;
  std::vector<NodeId> children;
  std::vector<LeafIndex> terminals;
  double leaf_weight = 0.0;
  // Nodes are stored in preorder, so the subtree of u is [u, subtree_end).
  NodeId subtree_end = 0;

  Tokens length() const { return static_cast<Tokens>(segment.size()); }
};

// Recursive, file-shaped description of a tree. Used by the explicit tree
// input format and by test fixtures.
struct TreeSpec {
  std::vector<TokenId> segment;
  std::vector<TreeSpec> children;
  std::vector<std::string> leaf_ids;
  std::vector<double> leaf_weights;          // empty: all 1.0
  std::vector<Tokens> leaf_supervised_from;  // empty: all 0
};

class TrajectoryTree {
 public:
  // Validates the trie invariants and renumbers nodes into preorder.
  static TrajectoryTree from_spec(const TreeSpec& spec);

  NodeId root() const { return 0; }
  const TreeNode& node(NodeId u) const { return nodes_.at(static_cast<size_t>(u)); }
  std::span<const TreeNode> nodes() const { return nodes_; }
  size_t node_count() const { return nodes_.size(); }

  const Leaf& leaf(LeafIndex i) const { return leaves_.at(static_cast<size_t>(i)); }
  std::span<const Leaf> leaves() const { return leaves_; }
  size_t leaf_count() const { return leaves_.size(); }

  std::optional<LeafIndex> find_leaf(std::string_view id) const;
  // Throws InputError for unknown ids.
  LeafIndex leaf_index(std::string_view id) const;

  bool has_children(NodeId u) const { return !node(u).children.empty(); }
  bool is_ancestor_or_self(NodeId ancestor, NodeId u) const {
    return ancestor <= u && u < node(ancestor).subtree_end;
  }

  // Root first, u last.
  std::vector<NodeId> path_to(NodeId u) const;
  std::vector<TokenId> leaf_tokens(LeafIndex leaf) const;
  // Leaves ending anywhere in the subtree of u, in preorder.
  std::vector<LeafIndex> subtree_leaves(NodeId u) const;
  // Leaf indices ordered by id; the canonical accumulation order.
  std::vector<LeafIndex> leaves_by_id() const;

  TreeSpec to_spec() const;

 private:
  friend class TreeAssembler;

  std::vector<TreeNode> nodes_;
  std::vector<Leaf> leaves_;
  std::unordered_map<std::string, LeafIndex> leaf_by_id_;
};

// Longest-common-prefix merge. Adds an empty synthetic root when the inputs do
// not all share their first token. Children keep first-appearance order.
TrajectoryTree build_forest(std::span<const Trajectory> trajectories);

struct TreeAnnotations {
  std::vector<Tokens> prefix_length;    // tokens from the root through u, inclusive
  std::vector<Tokens> leaf_count;       // leaves ending in the subtree of u
  std::vector<Tokens> residual_length;  // sum over subtree leaves of the path length below u
  std::vector<Tokens> subtree_tokens;   // sum of segment lengths in the subtree of u

  Tokens depth(NodeId u) const { return prefix_length.at(static_cast<size_t>(u)); }
};

// One post-order pass; O(|V|).
TreeAnnotations annotate(const TrajectoryTree& tree);

// Tokens processed when every leaf is packed as its own linear sequence.
Tokens linear_token_total(const TrajectoryTree& tree);
// Tokens processed when every node is computed exactly once.
Tokens tree_token_total(const TrajectoryTree& tree);
// Potential overlap ratio: 1 - tree_token_total / linear_token_total.
double por(const TrajectoryTree& tree);

struct CurvePoint {
  Tokens position = 0;
  Tokens baseline_active = 0;
  Tokens tree_active = 0;

  bool operator==(const CurvePoint&) const = default;
};

// Active trajectory counts per token position, for the baseline (leaves still
// running) and for the tree (nodes whose span covers the position).
std::vector<CurvePoint> active_trajectory_curve(const TrajectoryTree& tree);

}  // namespace prefix_forest
