// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/batch_emitter.h"

#include <algorithm>

#include "prefix_forest/errors.h"

namespace prefix_forest {

std::vector<int> PackedBatch::ancestor_spans(int s) const {
  std::vector<int> out;
  for (int v = s; v != -1; v = spans[static_cast<size_t>(v)].parent) out.push_back(v);
  std::reverse(out.begin(), out.end());
  return out;
}

namespace {

class BatchBuilder {
 public:
  explicit BatchBuilder(const TrajectoryTree& tree) : tree_(tree) {}

  int add_span(NodeId u, int parent) {
    const TreeNode& node = tree_.node(u);
    const Tokens first_position = parent_prefix(u);
    const Tokens threshold = supervision_threshold(u);
    const bool last_has_label = node.children.size() == 1 && node.terminals.empty();
    const int s = static_cast<int>(batch_.spans.size());
    BatchSpan span;
    span.node = u;
    span.start = batch_.tokens.size();
    span.parent = parent;
    for (size_t k = 0; k < node.segment.size(); ++k) {
      const Tokens pos = first_position + static_cast<Tokens>(k);
      std::optional<TokenId> label;
      if (k + 1 < node.segment.size()) {
        label = node.segment[k + 1];
      } else if (last_has_label) {
        label = tree_.node(node.children.front()).segment.front();
      }
      batch_.tokens.push_back(node.segment[k]);
      batch_.span_of_token.push_back(s);
      batch_.position_ids.push_back(pos);
      batch_.labels.push_back(label);
      batch_.supervised_mask.push_back(label.has_value() && pos >= threshold ? 1 : 0);
    }
    span.end = batch_.tokens.size();
    batch_.spans.push_back(span);
    return s;
  }

  // Fills subtree extents, leaf bookkeeping and tree_scale.
  PackedBatch finish(const std::vector<std::pair<LeafIndex, int>>& leaf_spans) {
    const size_t ns = batch_.spans.size();
    for (size_t s = 0; s < ns; ++s) batch_.spans[s].subtree_end = static_cast<int>(s) + 1;
    for (size_t s = ns; s-- > 1;) {
      const int p = batch_.spans[s].parent;
      auto& end = batch_.spans[static_cast<size_t>(p)].subtree_end;
      end = std::max(end, batch_.spans[s].subtree_end);
    }

    std::vector<std::pair<LeafIndex, int>> sorted = leaf_spans;
    std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
      return tree_.leaf(a.first).id < tree_.leaf(b.first).id;
    });
    std::vector<double> span_weight(ns, 0.0);
    for (const auto& [leaf, s] : sorted) {
      batch_.leaves.push_back(leaf);
      batch_.leaf_weights.push_back(tree_.leaf(leaf).weight);
      batch_.leaf_span.push_back(s);
      span_weight[static_cast<size_t>(s)] += tree_.leaf(leaf).weight;
    }
    for (size_t s = ns; s-- > 1;) {
      span_weight[static_cast<size_t>(batch_.spans[s].parent)] += span_weight[s];
    }
    batch_.tree_scale.resize(batch_.tokens.size());
    for (size_t i = 0; i < batch_.tokens.size(); ++i) {
      batch_.tree_scale[i] = span_weight[static_cast<size_t>(batch_.span_of_token[i])];
    }
    return std::move(batch_);
  }

 private:
  Tokens parent_prefix(NodeId u) const {
    Tokens total = 0;
    for (NodeId v = tree_.node(u).parent; v != kNoNode; v = tree_.node(v).parent) total += tree_.node(v).length();
    return total;
  }

  // Largest supervised_from among all tree leaves below u.
  Tokens supervision_threshold(NodeId u) const {
    Tokens threshold = 0;
    const NodeId end = tree_.node(u).subtree_end;
    for (NodeId v = u; v < end; ++v) {
      for (LeafIndex l : tree_.node(v).terminals) threshold = std::max(threshold, tree_.leaf(l).supervised_from);
    }
    return threshold;
  }

  const TrajectoryTree& tree_;
  PackedBatch batch_;
};

// Checks leaves, node set and anchor against the tree.
void check_traversal(const TrajectoryTree& tree, const Traversal& t) {
  if (t.leaves.empty()) throw PlanMismatch("traversal has no leaves");
  std::vector<NodeId> induced;
  std::vector<char> seen(tree.leaf_count(), 0);
  for (LeafIndex l : t.leaves) {
    if (l < 0 || static_cast<size_t>(l) >= tree.leaf_count()) {
      throw PlanMismatch("traversal references leaf index " + std::to_string(l) + " outside the tree");
    }
    if (seen[static_cast<size_t>(l)]++) throw PlanMismatch("leaf '" + tree.leaf(l).id + "' repeated in traversal");
    for (NodeId v : tree.path_to(tree.leaf(l).node)) induced.push_back(v);
    if (t.anchor && !tree.is_ancestor_or_self(*t.anchor, tree.leaf(l).node)) {
      throw PlanMismatch("anchor " + std::to_string(*t.anchor) + " is not above leaf '" + tree.leaf(l).id + "'");
    }
  }
  if (t.anchor && (*t.anchor < 0 || static_cast<size_t>(*t.anchor) >= tree.node_count())) {
    throw PlanMismatch("anchor outside the tree");
  }
  std::sort(induced.begin(), induced.end());
  induced.erase(std::unique(induced.begin(), induced.end()), induced.end());
  std::vector<NodeId> listed = t.nodes;
  std::sort(listed.begin(), listed.end());
  if (listed != induced) throw PlanMismatch("traversal node list is not the union of its leaf paths");
}

}  // namespace

PackedBatch emit(const TrajectoryTree& tree, const Traversal& traversal) {
  check_traversal(tree, traversal);
  BatchBuilder builder(tree);
  std::vector<std::pair<LeafIndex, int>> leaf_spans;

  if (traversal.anchor) {
    const NodeId anchor = *traversal.anchor;
    int parent = -1;
    for (NodeId v : tree.path_to(anchor)) parent = builder.add_span(v, parent);
    const int anchor_span = parent;
    std::vector<LeafIndex> order = traversal.leaves;
    std::sort(order.begin(), order.end(), [&](LeafIndex a, LeafIndex b) {
      return std::make_pair(tree.leaf(a).node, a) < std::make_pair(tree.leaf(b).node, b);
    });
    for (LeafIndex l : order) {
      const std::vector<NodeId> path = tree.path_to(tree.leaf(l).node);
      int s = anchor_span;
      bool below = false;
      for (NodeId v : path) {
        if (below) s = builder.add_span(v, s);
        below = below || v == anchor;
      }
      leaf_spans.emplace_back(l, s);
    }
    return builder.finish(leaf_spans);
  }

  std::vector<char> in_batch(tree.node_count(), 0);
  for (NodeId v : traversal.nodes) in_batch[static_cast<size_t>(v)] = 1;
  std::vector<int> span_of_node(tree.node_count(), -1);
  // Depth-first, children in tree order.
  std::vector<std::pair<NodeId, int>> stack{{tree.root(), -1}};
  while (!stack.empty()) {
    const auto [u, parent] = stack.back();
    stack.pop_back();
    const int s = builder.add_span(u, parent);
    span_of_node[static_cast<size_t>(u)] = s;
    const auto& children = tree.node(u).children;
    for (auto it = children.rbegin(); it != children.rend(); ++it) {
      if (in_batch[static_cast<size_t>(*it)]) stack.emplace_back(*it, s);
    }
  }
  for (LeafIndex l : traversal.leaves) {
    leaf_spans.emplace_back(l, span_of_node[static_cast<size_t>(tree.leaf(l).node)]);
  }
  return builder.finish(leaf_spans);
}

PackedBatch baseline_emit(const TrajectoryTree& tree, LeafIndex leaf) {
  if (leaf < 0 || static_cast<size_t>(leaf) >= tree.leaf_count()) {
    throw InputError("unknown leaf index " + std::to_string(leaf));
  }
  Traversal t;
  t.leaves = {leaf};
  t.nodes = tree.path_to(tree.leaf(leaf).node);
  return emit(tree, t);
}

std::vector<size_t> leaf_path_indices(const PackedBatch& batch, size_t slot) {
  std::vector<size_t> out;
  for (int s : batch.ancestor_spans(batch.leaf_span.at(slot))) {
    const BatchSpan& span = batch.spans[static_cast<size_t>(s)];
    for (size_t i = span.start; i < span.end; ++i) out.push_back(i);
  }
  return out;
}

DenseMask dense_mask(const PackedBatch& batch, size_t max_tokens) {
  const size_t n = batch.size();
  if (n > max_tokens) {
    throw BatchTooLarge("batch of " + std::to_string(n) + " tokens exceeds the dense mask cap of " +
                        std::to_string(max_tokens));
  }
  DenseMask mask{n, std::vector<std::uint8_t>(n * n, 0)};
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) mask.bits[i * n + j] = batch.allowed(i, j) ? 1 : 0;
  }
  return mask;
}

DenseMask plain_causal_mask(size_t n, size_t max_tokens) {
  if (n > max_tokens) {
    throw BatchTooLarge("batch of " + std::to_string(n) + " tokens exceeds the dense mask cap of " +
                        std::to_string(max_tokens));
  }
  DenseMask mask{n, std::vector<std::uint8_t>(n * n, 0)};
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) mask.bits[i * n + j] = 1;
  }
  return mask;
}

}  // namespace prefix_forest
