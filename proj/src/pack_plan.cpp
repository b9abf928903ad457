// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/pack_plan.h"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "prefix_forest/errors.h"

namespace prefix_forest {

void require_packable(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap) {
  if (cap.tokens < 1) {
    throw InputError("capacity must be at least 1 token");
  }
  for (const Leaf& leaf : tree.leaves()) {
    if (ann.depth(leaf.node) > cap.tokens) {
      throw InfeasibleLeaf("trajectory '" + leaf.id + "' has " + std::to_string(ann.depth(leaf.node)) +
                           " tokens, above capacity " + std::to_string(cap.tokens));
    }
  }
}

namespace {

std::vector<NodeId> induced_nodes(const TrajectoryTree& tree, const std::vector<LeafIndex>& leaves) {
  std::unordered_set<NodeId> seen;
  std::vector<NodeId> nodes;
  for (LeafIndex li : leaves) {
    for (NodeId v = tree.leaf(li).node; v != kNoNode && seen.insert(v).second; v = tree.node(v).parent) {
      nodes.push_back(v);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

}  // namespace

Tokens shared_subtree_cost(const TrajectoryTree& tree, const std::vector<LeafIndex>& leaves) {
  Tokens cost = 0;
  for (NodeId v : induced_nodes(tree, leaves)) {
    cost += tree.node(v).length();
  }
  return cost;
}

Traversal make_traversal(const TrajectoryTree& tree, const TreeAnnotations& ann, std::vector<LeafIndex> leaves,
                         std::optional<NodeId> anchor) {
  std::sort(leaves.begin(), leaves.end(),
            [&](LeafIndex a, LeafIndex b) { return tree.leaf(a).id < tree.leaf(b).id; });
  Traversal t;
  t.nodes = induced_nodes(tree, leaves);
  t.anchor = anchor;
  if (anchor) {
    const Tokens shared = ann.depth(*anchor);
    t.cost = shared;
    for (LeafIndex li : leaves) {
      t.cost += ann.depth(tree.leaf(li).node) - shared;
    }
  } else {
    for (NodeId v : t.nodes) {
      t.cost += tree.node(v).length();
    }
  }
  t.leaves = std::move(leaves);
  return t;
}

void finish_plan(const TrajectoryTree& tree, PackPlan& plan) {
  std::vector<std::vector<std::string>> keys;
  keys.reserve(plan.traversals.size());
  for (const Traversal& t : plan.traversals) {
    auto& ids = keys.emplace_back();
    for (LeafIndex li : t.leaves) ids.push_back(tree.leaf(li).id);
  }
  std::vector<size_t> order(plan.traversals.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return keys[a] < keys[b]; });
  std::vector<Traversal> sorted;
  sorted.reserve(order.size());
  for (size_t i : order) sorted.push_back(std::move(plan.traversals[i]));
  plan.traversals = std::move(sorted);
  plan.total_cost = 0;
  for (const Traversal& t : plan.traversals) {
    plan.total_cost += t.cost;
  }
  plan.savings = linear_token_total(tree) - plan.total_cost;
}

double effective_reuse_ratio(const PackPlan& plan, const TrajectoryTree& tree) {
  const auto linear = static_cast<double>(linear_token_total(tree));
  return 1.0 - static_cast<double>(plan.total_cost) / linear;
}

}  // namespace prefix_forest
