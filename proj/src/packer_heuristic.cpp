// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/packer_heuristic.h"

#include <algorithm>
#include <tuple>

namespace prefix_forest {

Tokens depth_bucket_width(Capacity cap) { return std::max<Tokens>(1, (cap.tokens + 7) / 8); }

namespace {

// A child subtree or a leaf ending at the node being ordered.
struct Item {
  Tokens max_depth = 0;
  int min_rank = 0;
  NodeId child = kNoNode;
  LeafIndex leaf = -1;
};

}  // namespace

PackPlan heuristic_pack(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap) {
  require_packable(tree, ann, cap);
  const size_t n = tree.node_count();
  const Tokens bucket = depth_bucket_width(cap);

  std::vector<int> rank(tree.leaf_count());
  {
    const auto by_id = tree.leaves_by_id();
    for (size_t r = 0; r < by_id.size(); ++r) rank[static_cast<size_t>(by_id[r])] = static_cast<int>(r);
  }

  // Deepest leaf and smallest leaf rank per subtree.
  std::vector<Tokens> max_depth(n, 0);
  std::vector<int> min_rank(n, static_cast<int>(tree.leaf_count()));
  for (size_t i = n; i-- > 0;) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    if (!node.terminals.empty()) max_depth[i] = std::max(max_depth[i], ann.prefix_length[i]);
    for (LeafIndex l : node.terminals) min_rank[i] = std::min(min_rank[i], rank[static_cast<size_t>(l)]);
    if (node.parent != kNoNode) {
      const auto p = static_cast<size_t>(node.parent);
      max_depth[p] = std::max(max_depth[p], max_depth[i]);
      min_rank[p] = std::min(min_rank[p], min_rank[i]);
    }
  }

  auto order_key = [&](const Item& it) {
    return std::make_tuple(-(it.max_depth / bucket), -it.max_depth, it.min_rank);
  };

  // Depth-first leaf sequence.
  std::vector<LeafIndex> sequence;
  sequence.reserve(tree.leaf_count());
  std::vector<Item> stack{Item{max_depth[0], min_rank[0], tree.root(), -1}};
  std::vector<Item> items;
  while (!stack.empty()) {
    const Item top = stack.back();
    stack.pop_back();
    if (top.child == kNoNode) {
      sequence.push_back(top.leaf);
      continue;
    }
    const auto ui = static_cast<size_t>(top.child);
    const TreeNode& node = tree.node(top.child);
    items.clear();
    for (NodeId c : node.children) {
      const auto ci = static_cast<size_t>(c);
      items.push_back(Item{max_depth[ci], min_rank[ci], c, -1});
    }
    for (LeafIndex l : node.terminals) {
      items.push_back(Item{ann.prefix_length[ui], rank[static_cast<size_t>(l)], kNoNode, l});
    }
    std::stable_sort(items.begin(), items.end(),
                     [&](const Item& a, const Item& b) { return order_key(a) < order_key(b); });
    for (auto it = items.rbegin(); it != items.rend(); ++it) stack.push_back(*it);
  }

  // Greedy accumulation. stamp[v] holds the traversal that last covered v.
  std::vector<int> stamp(n, -1);
  std::vector<std::vector<LeafIndex>> groups;
  Tokens current_cost = 0;
  for (LeafIndex leaf : sequence) {
    const int current = static_cast<int>(groups.size()) - 1;
    Tokens extra = 0;
    if (current >= 0) {
      for (NodeId v = tree.leaf(leaf).node; v != kNoNode && stamp[static_cast<size_t>(v)] != current;
           v = tree.node(v).parent) {
        extra += tree.node(v).length();
      }
    }
    if (current < 0 || current_cost + extra > cap.tokens) {
      groups.emplace_back();
      current_cost = 0;
    }
    const int target = static_cast<int>(groups.size()) - 1;
    for (NodeId v = tree.leaf(leaf).node; v != kNoNode && stamp[static_cast<size_t>(v)] != target;
         v = tree.node(v).parent) {
      stamp[static_cast<size_t>(v)] = target;
      current_cost += tree.node(v).length();
    }
    groups.back().push_back(leaf);
  }

  PackPlan plan;
  plan.method = "heuristic";
  plan.cost_model = CostModel::kSharedSubtree;
  plan.capacity = cap.tokens;
  plan.traversals.reserve(groups.size());
  for (auto& group : groups) {
    plan.traversals.push_back(make_traversal(tree, ann, std::move(group)));
  }
  finish_plan(tree, plan);
  return plan;
}

}  // namespace prefix_forest
