// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flattening a traversal into the batch a model consumes: tokens in
// depth-first order, original position ids, span ancestry for the shared-prefix mask, and
// per-token tree-scale factors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

inline constexpr size_t kDefaultDenseMaskCap = 4096;

// One contiguous run of tokens copied from a tree node. Single-path
// traversals may copy a node more than once (one copy per leaf below the
// anchor), so the mask is defined over spans rather than nodes.
struct BatchSpan {
  NodeId node = kNoNode;
  size_t start = 0;
  size_t end = 0;
  int parent = -1;  // span index, -1 for the first span
  // Spans are stored depth-first: the descendants of span s are (s, subtree_end).
  int subtree_end = 0;
};

struct PackedBatch {
  std::vector<TokenId> tokens;
  std::vector<BatchSpan> spans;
  std::vector<int> span_of_token;
  std::vector<Tokens> position_ids;
  std::vector<double> tree_scale;
  std::vector<std::uint8_t> supervised_mask;
  std::vector<std::optional<TokenId>> labels;
  std::vector<LeafIndex> leaves;      // in-batch leaves, leaf-id order
  std::vector<double> leaf_weights;   // parallel to leaves
  std::vector<int> leaf_span;         // span where each leaf ends

  size_t size() const { return tokens.size(); }

  bool span_is_ancestor_or_self(int ancestor, int s) const {
    return ancestor <= s && s < spans[static_cast<size_t>(ancestor)].subtree_end;
  }

  // Token i may attend to token j.
  bool allowed(size_t i, size_t j) const {
    return span_is_ancestor_or_self(span_of_token[j], span_of_token[i]) && position_ids[j] <= position_ids[i];
  }

  // Span indices from the first span down to s.
  std::vector<int> ancestor_spans(int s) const;
};

// Label and supervision follow tree-level rules so every packing of the same
// tree agrees token by token:
//  * a token's label is the next token of its trajectory; the last token of a
//    node has a label only when the node has exactly one child and no leaf
//    ends there (otherwise the continuation differs between trajectories);
//  * a labelled token is supervised iff its position is at or after the
//    supervised_from of every leaf below its node.
// Throws PlanMismatch when the traversal does not belong to the tree.
PackedBatch emit(const TrajectoryTree& tree, const Traversal& traversal);

// The root-to-leaf sequence alone; tree_scale is the leaf weight.
// Throws InputError for an unknown leaf.
PackedBatch baseline_emit(const TrajectoryTree& tree, LeafIndex leaf);

// Batch token indices of the path of batch.leaves[slot], root first. Position
// k of the result corresponds to position k of baseline_emit for that leaf.
std::vector<size_t> leaf_path_indices(const PackedBatch& batch, size_t slot);

struct DenseMask {
  size_t n = 0;
  std::vector<std::uint8_t> bits;  // row-major n x n

  bool operator()(size_t i, size_t j) const { return bits[i * n + j] != 0; }
};

// Throws BatchTooLarge above max_tokens.
DenseMask dense_mask(const PackedBatch& batch, size_t max_tokens = kDefaultDenseMaskCap);

// Lower-triangular mask over the flattened order, ignoring the tree.
DenseMask plain_causal_mask(size_t n, size_t max_tokens = kDefaultDenseMaskCap);

}  // namespace prefix_forest
