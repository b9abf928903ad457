// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/packing_oracle.h"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>

#include "prefix_forest/errors.h"

namespace prefix_forest {

namespace {

// Path nodes of each leaf, computed by walking parents. Deliberately naive.
std::vector<std::vector<NodeId>> leaf_paths(const TrajectoryTree& tree) {
  std::vector<std::vector<NodeId>> paths(tree.leaf_count());
  for (size_t i = 0; i < tree.leaf_count(); ++i) {
    for (NodeId v = tree.leaf(static_cast<LeafIndex>(i)).node; v != kNoNode; v = tree.node(v).parent) {
      paths[i].push_back(v);
    }
  }
  return paths;
}

Tokens union_cost(const TrajectoryTree& tree, const std::vector<std::vector<NodeId>>& paths,
                  const std::vector<LeafIndex>& leaves) {
  std::vector<char> used(tree.node_count(), 0);
  Tokens cost = 0;
  for (LeafIndex l : leaves) {
    for (NodeId v : paths[static_cast<size_t>(l)]) {
      if (!used[static_cast<size_t>(v)]) {
        used[static_cast<size_t>(v)] = 1;
        cost += tree.node(v).length();
      }
    }
  }
  return cost;
}

Tokens path_length(const TrajectoryTree& tree, NodeId u) {
  Tokens total = 0;
  for (NodeId v = u; v != kNoNode; v = tree.node(v).parent) total += tree.node(v).length();
  return total;
}

}  // namespace

Tokens group_cost(const TrajectoryTree& tree, std::span<const std::string> leaf_ids) {
  std::vector<LeafIndex> leaves;
  for (const std::string& id : leaf_ids) leaves.push_back(tree.leaf_index(id));
  return union_cost(tree, leaf_paths(tree), leaves);
}

OracleResult brute_force_optimal(const TrajectoryTree& tree, Capacity cap) {
  const size_t k = tree.leaf_count();
  if (k > kOracleMaxLeaves) {
    throw TooManyLeaves("oracle handles at most " + std::to_string(kOracleMaxLeaves) + " leaves, got " +
                        std::to_string(k));
  }
  const std::vector<LeafIndex> order = tree.leaves_by_id();
  const auto paths = leaf_paths(tree);
  const size_t subsets = size_t{1} << k;
  std::vector<Tokens> mask_cost(subsets, 0);
  for (size_t mask = 1; mask < subsets; ++mask) {
    std::vector<LeafIndex> group;
    for (size_t i = 0; i < k; ++i) {
      if (mask >> i & 1u) group.push_back(order[i]);
    }
    mask_cost[mask] = union_cost(tree, paths, group);
  }

  // Restricted-growth strings: label[i] <= max(label[0..i-1]) + 1.
  std::vector<int> label(k, 0);
  std::vector<int> best_label;
  Tokens best_cost = std::numeric_limits<Tokens>::max();
  int best_groups = std::numeric_limits<int>::max();

  auto grouping = [&](const std::vector<int>& lab, int groups) {
    std::vector<std::vector<int>> g(static_cast<size_t>(groups));
    for (size_t i = 0; i < k; ++i) g[static_cast<size_t>(lab[i])].push_back(static_cast<int>(i));
    return g;
  };

  std::function<void(size_t, int)> enumerate = [&](size_t i, int groups) {
    if (i == k) {
      std::vector<uint32_t> masks(static_cast<size_t>(groups), 0);
      for (size_t j = 0; j < k; ++j) masks[static_cast<size_t>(label[j])] |= 1u << j;
      Tokens total = 0;
      for (uint32_t m : masks) {
        if (mask_cost[m] > cap.tokens) return;
        total += mask_cost[m];
      }
      bool better = total < best_cost || (total == best_cost && groups < best_groups);
      if (!better && total == best_cost && groups == best_groups) {
        better = grouping(label, groups) < grouping(best_label, best_groups);
      }
      if (better) {
        best_cost = total;
        best_groups = groups;
        best_label = label;
      }
      return;
    }
    for (int g = 0; g <= groups; ++g) {
      label[i] = g;
      enumerate(i + 1, std::max(groups, g + 1));
    }
  };
  enumerate(0, 0);

  if (best_label.empty() && k > 0) {
    throw InfeasibleLeaf("no partition fits capacity " + std::to_string(cap.tokens));
  }

  OracleResult result;
  result.cost = best_cost;
  result.plan.method = "oracle";
  result.plan.cost_model = CostModel::kSharedSubtree;
  result.plan.capacity = cap.tokens;
  const TreeAnnotations ann = annotate(tree);
  for (const auto& group : grouping(best_label, best_groups)) {
    std::vector<LeafIndex> leaves;
    for (int i : group) leaves.push_back(order[static_cast<size_t>(i)]);
    result.plan.traversals.push_back(make_traversal(tree, ann, std::move(leaves)));
  }
  finish_plan(tree, result.plan);
  return result;
}

Tokens brute_force_antichain(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap) {
  if (tree.node_count() > kOracleMaxNodes) {
    throw TooManyNodes("antichain oracle handles at most " + std::to_string(kOracleMaxNodes) + " nodes, got " +
                       std::to_string(tree.node_count()));
  }
  if (tree.leaf_count() > 64) {
    throw TooManyLeaves("antichain oracle handles at most 64 leaves");
  }
  (void)ann;  // recomputed below from first principles

  struct Element {
    uint64_t leaves = 0;
    Tokens savings = 0;
  };
  std::vector<Element> elements;
  for (size_t i = 0; i < tree.node_count(); ++i) {
    const auto u = static_cast<NodeId>(i);
    uint64_t mask = 0;
    Tokens residual = 0;
    const Tokens prefix = path_length(tree, u);
    for (size_t l = 0; l < tree.leaf_count(); ++l) {
      const NodeId at = tree.leaf(static_cast<LeafIndex>(l)).node;
      bool below = false;
      for (NodeId v = at; v != kNoNode; v = tree.node(v).parent) below = below || v == u;
      if (below) {
        mask |= uint64_t{1} << l;
        residual += path_length(tree, at) - prefix;
      }
    }
    const auto count = static_cast<Tokens>(__builtin_popcountll(mask));
    if (prefix + residual <= cap.tokens) elements.push_back({mask, (count - 1) * prefix});
    // A leaf ending on a node that is not a plain leaf can also stand alone.
    const TreeNode& node = tree.node(u);
    if (!(node.children.empty() && node.terminals.size() == 1) && prefix <= cap.tokens) {
      for (LeafIndex l : node.terminals) elements.push_back({uint64_t{1} << l, 0});
    }
  }

  const uint64_t all = tree.leaf_count() == 64 ? ~uint64_t{0} : (uint64_t{1} << tree.leaf_count()) - 1;
  std::optional<Tokens> best;
  std::function<void(uint64_t, Tokens)> cover = [&](uint64_t covered, Tokens savings) {
    if (covered == all) {
      if (!best || savings > *best) best = savings;
      return;
    }
    const uint64_t next = ~covered & all & (~(~covered & all) + 1);  // lowest uncovered leaf
    for (const Element& e : elements) {
      if ((e.leaves & next) && !(e.leaves & covered)) cover(covered | e.leaves, savings + e.savings);
    }
  };
  cover(0, 0);
  if (!best) {
    throw InfeasibleLeaf("no antichain covers the leaves at capacity " + std::to_string(cap.tokens));
  }
  return *best;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyTraversal: return "EmptyTraversal";
    case ViolationKind::kUnknownLeaf: return "UnknownLeaf";
    case ViolationKind::kDuplicateLeaf: return "DuplicateLeaf";
    case ViolationKind::kUncoveredLeaf: return "UncoveredLeaf";
    case ViolationKind::kNodeSetMismatch: return "NodeSetMismatch";
    case ViolationKind::kAnchorMismatch: return "AnchorMismatch";
    case ViolationKind::kCostMismatch: return "CostMismatch";
    case ViolationKind::kCapacityExceeded: return "CapacityExceeded";
    case ViolationKind::kTotalCostMismatch: return "TotalCostMismatch";
    case ViolationKind::kSavingsMismatch: return "SavingsMismatch";
  }
  return "Unknown";
}

std::vector<Violation> validate_plan(const TrajectoryTree& tree, const PackPlan& plan, Capacity cap) {
  std::vector<Violation> out;
  const auto paths = leaf_paths(tree);
  std::vector<int> seen(tree.leaf_count(), 0);
  Tokens total = 0;
  Tokens linear = 0;
  for (size_t l = 0; l < tree.leaf_count(); ++l) linear += path_length(tree, tree.leaf(static_cast<LeafIndex>(l)).node);

  for (size_t ti = 0; ti < plan.traversals.size(); ++ti) {
    const Traversal& t = plan.traversals[ti];
    const int idx = static_cast<int>(ti);
    total += t.cost;
    if (t.leaves.empty()) {
      out.push_back({ViolationKind::kEmptyTraversal, idx, "traversal has no leaves"});
      continue;
    }
    std::vector<LeafIndex> valid;
    for (LeafIndex l : t.leaves) {
      if (l < 0 || static_cast<size_t>(l) >= tree.leaf_count()) {
        out.push_back({ViolationKind::kUnknownLeaf, idx, "leaf index " + std::to_string(l)});
        continue;
      }
      if (seen[static_cast<size_t>(l)]++) {
        out.push_back({ViolationKind::kDuplicateLeaf, idx, "leaf '" + tree.leaf(l).id + "'"});
      }
      valid.push_back(l);
    }
    std::vector<NodeId> induced;
    for (LeafIndex l : valid) {
      induced.insert(induced.end(), paths[static_cast<size_t>(l)].begin(), paths[static_cast<size_t>(l)].end());
    }
    std::sort(induced.begin(), induced.end());
    induced.erase(std::unique(induced.begin(), induced.end()), induced.end());
    std::vector<NodeId> listed = t.nodes;
    std::sort(listed.begin(), listed.end());
    if (listed != induced) {
      out.push_back({ViolationKind::kNodeSetMismatch, idx, "node list differs from the union of leaf paths"});
    }

    Tokens expected = 0;
    if (plan.cost_model == CostModel::kSinglePath) {
      if (!t.anchor || *t.anchor < 0 || static_cast<size_t>(*t.anchor) >= tree.node_count()) {
        out.push_back({ViolationKind::kAnchorMismatch, idx, "single-path traversal without a valid anchor"});
        continue;
      }
      const Tokens shared = path_length(tree, *t.anchor);
      expected = shared;
      for (LeafIndex l : valid) {
        const auto& p = paths[static_cast<size_t>(l)];
        if (std::find(p.begin(), p.end(), *t.anchor) == p.end()) {
          out.push_back({ViolationKind::kAnchorMismatch, idx, "anchor is not above leaf '" + tree.leaf(l).id + "'"});
        }
        expected += path_length(tree, tree.leaf(l).node) - shared;
      }
    } else {
      expected = union_cost(tree, paths, valid);
    }
    if (expected != t.cost) {
      out.push_back({ViolationKind::kCostMismatch, idx,
                     "recorded " + std::to_string(t.cost) + ", expected " + std::to_string(expected)});
    }
    if (expected > cap.tokens || t.cost > cap.tokens) {
      out.push_back({ViolationKind::kCapacityExceeded, idx,
                     "cost " + std::to_string(std::max(expected, t.cost)) + " > capacity " +
                         std::to_string(cap.tokens)});
    }
  }
  for (size_t l = 0; l < tree.leaf_count(); ++l) {
    if (!seen[l]) {
      out.push_back({ViolationKind::kUncoveredLeaf, -1, "leaf '" + tree.leaf(static_cast<LeafIndex>(l)).id + "'"});
    }
  }
  if (total != plan.total_cost) {
    out.push_back({ViolationKind::kTotalCostMismatch, -1,
                   "recorded " + std::to_string(plan.total_cost) + ", traversals sum to " + std::to_string(total)});
  }
  if (plan.savings != linear - plan.total_cost) {
    out.push_back({ViolationKind::kSavingsMismatch, -1,
                   "recorded " + std::to_string(plan.savings) + ", expected " +
                       std::to_string(linear - plan.total_cost)});
  }
  return out;
}

}  // namespace prefix_forest
