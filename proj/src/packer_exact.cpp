// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/packer_exact.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "prefix_forest/errors.h"

namespace prefix_forest {

bool feasible(NodeId u, const TreeAnnotations& ann, Capacity cap) {
  const auto i = static_cast<size_t>(u);
  return ann.prefix_length[i] + ann.residual_length[i] <= cap.tokens;
}

// ---------------------------------------------------------------------------
// Single-path DP
// ---------------------------------------------------------------------------

namespace {

struct SingleEntry {
  std::optional<Tokens> savings;
  Tokens traversals = 0;
  bool take_node = false;
};

bool is_plain_leaf(const TreeNode& node) { return node.children.empty() && node.terminals.size() == 1; }

}  // namespace

SinglePathSolution single_path_dp(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap) {
  require_packable(tree, ann, cap);
  const size_t n = tree.node_count();
  std::vector<SingleEntry> dp(n);
  for (size_t i = n; i-- > 0;) {
    const auto u = static_cast<NodeId>(i);
    const TreeNode& node = tree.node(u);
    SingleEntry& e = dp[i];
    if (is_plain_leaf(node)) {
      if (ann.prefix_length[i] <= cap.tokens) {
        e = {0, 1, true};
      }
      continue;
    }
    // Delegate: children cover themselves, leaves ending here go alone.
    std::optional<Tokens> delegated = 0;
    Tokens delegated_count = static_cast<Tokens>(node.terminals.size());
    if (!node.terminals.empty() && ann.prefix_length[i] > cap.tokens) {
      delegated.reset();
    }
    for (NodeId c : node.children) {
      const SingleEntry& ce = dp[static_cast<size_t>(c)];
      if (!ce.savings || !delegated) {
        delegated.reset();
        break;
      }
      *delegated += *ce.savings;
      delegated_count += ce.traversals;
    }
    if (feasible(u, ann, cap)) {
      const Tokens shared = (ann.leaf_count[i] - 1) * ann.prefix_length[i];
      if (!delegated || shared > *delegated || (shared == *delegated && delegated_count > 1)) {
        e = {shared, 1, true};
        continue;
      }
    }
    e = {delegated, delegated_count, false};
  }

  SinglePathSolution sol;
  sol.capacity = cap.tokens;
  sol.table.reserve(n);
  for (const SingleEntry& e : dp) sol.table.push_back(e.savings);
  if (!dp[0].savings) {
    // Unreachable when every leaf fits on its own.
    throw InfeasibleLeaf("tree cannot be covered at capacity " + std::to_string(cap.tokens));
  }
  sol.savings = *dp[0].savings;
  std::vector<NodeId> stack{tree.root()};
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    if (dp[static_cast<size_t>(u)].take_node) {
      sol.selected.push_back(u);
      continue;
    }
    const TreeNode& node = tree.node(u);
    sol.singleton_leaves.insert(sol.singleton_leaves.end(), node.terminals.begin(), node.terminals.end());
    for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
      stack.push_back(*it);
    }
  }
  std::sort(sol.selected.begin(), sol.selected.end());
  return sol;
}

PackPlan reconstruct_plan(const SinglePathSolution& solution, const TrajectoryTree& tree) {
  const TreeAnnotations ann = annotate(tree);
  PackPlan plan;
  plan.method = "single";
  plan.cost_model = CostModel::kSinglePath;
  plan.capacity = solution.capacity;
  for (NodeId u : solution.selected) {
    plan.traversals.push_back(make_traversal(tree, ann, tree.subtree_leaves(u), u));
  }
  for (LeafIndex leaf : solution.singleton_leaves) {
    plan.traversals.push_back(make_traversal(tree, ann, {leaf}, tree.leaf(leaf).node));
  }
  finish_plan(tree, plan);
  return plan;
}

// ---------------------------------------------------------------------------
// Multi-path DP
// ---------------------------------------------------------------------------

namespace {

// Where the items of one source (a child node or a leaf ending here) went.
struct Choice {
  int state = 0;
  std::vector<int> bins;  // bin index at the parent for each item of the source state
};

struct DpState {
  std::vector<Tokens> loads;  // tokens below the node per traversal; sorted once final
  Tokens cost = 0;            // tokens paid strictly below the node
  std::vector<Choice> choices;
};

const std::vector<DpState>& terminal_states() {
  static const std::vector<DpState> states{DpState{{0}, 0, {}}};
  return states;
}

// a dominates b: no more traversals, no more cost, and loads no larger once
// both are sorted and right-aligned.
bool dominates(const DpState& a, const std::vector<Tokens>& a_sorted, const DpState& b,
               const std::vector<Tokens>& b_sorted) {
  if (a_sorted.size() > b_sorted.size() || a.cost > b.cost) return false;
  const size_t offset = b_sorted.size() - a_sorted.size();
  for (size_t i = 0; i < a_sorted.size(); ++i) {
    if (a_sorted[i] > b_sorted[offset + i]) return false;
  }
  return true;
}

class NodeMerger {
 public:
  NodeMerger(Tokens bin_capacity, const ExactLimits& limits, NodeId node)
      : bin_capacity_(bin_capacity), limits_(limits), node_(node) {
    partial_.push_back(DpState{});
  }

  void add_source(const std::vector<DpState>& source, Tokens lift) {
    std::map<std::vector<Tokens>, size_t> by_loads;
    std::vector<DpState> next;
    for (const DpState& base : partial_) {
      for (size_t si = 0; si < source.size(); ++si) {
        const DpState& s = source[si];
        items_.clear();
        bool fits = true;
        for (Tokens load : s.loads) {
          if (load + lift > bin_capacity_) {
            fits = false;
            break;
          }
          items_.push_back(load + lift);
        }
        if (!fits) continue;
        loads_ = base.loads;
        used_.assign(loads_.size(), 0);
        placement_.assign(items_.size(), -1);
        assign(0, [&] {
          DpState merged;
          merged.loads = loads_;
          merged.cost = base.cost + s.cost + lift * static_cast<Tokens>(items_.size());
          merged.choices = base.choices;
          merged.choices.push_back(Choice{static_cast<int>(si), placement_});
          std::vector<Tokens> key = merged.loads;
          std::sort(key.begin(), key.end());
          auto [it, inserted] = by_loads.emplace(std::move(key), next.size());
          if (inserted) {
            next.push_back(std::move(merged));
          } else if (merged.cost < next[it->second].cost) {
            next[it->second] = std::move(merged);
          }
        });
      }
    }
    partial_ = std::move(next);
    if (limits_.dominance_pruning) prune();
    if (partial_.size() > limits_.max_states) {
      throw ExactModeLimitExceeded("node " + std::to_string(node_) + " keeps " + std::to_string(partial_.size()) +
                                   " states (limit " + std::to_string(limits_.max_states) +
                                   "); use the heuristic packer");
    }
  }

  // Sorts each state's loads and renumbers the recorded bin placements.
  std::vector<DpState> finish() {
    for (DpState& s : partial_) {
      std::vector<int> order(s.loads.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.loads[a] < s.loads[b]; });
      std::vector<int> rank(order.size());
      std::vector<Tokens> sorted(order.size());
      for (size_t r = 0; r < order.size(); ++r) {
        rank[static_cast<size_t>(order[r])] = static_cast<int>(r);
        sorted[r] = s.loads[static_cast<size_t>(order[r])];
      }
      s.loads = std::move(sorted);
      for (Choice& c : s.choices) {
        for (int& b : c.bins) b = rank[static_cast<size_t>(b)];
      }
    }
    return std::move(partial_);
  }

 private:
  template <typename Emit>
  void assign(size_t item, const Emit& emit) {
    if (item == items_.size()) {
      emit();
      return;
    }
    const Tokens size = items_[item];
    const size_t existing = loads_.size();
    for (size_t b = 0; b < existing; ++b) {
      if (used_[b] || loads_[b] + size > bin_capacity_) continue;
      // Unused bins with equal load are interchangeable; try only the first.
      bool seen = false;
      for (size_t e = 0; e < b && !seen; ++e) {
        seen = !used_[e] && loads_[e] == loads_[b];
      }
      if (seen) continue;
      loads_[b] += size;
      used_[b] = 1;
      placement_[item] = static_cast<int>(b);
      assign(item + 1, emit);
      loads_[b] -= size;
      used_[b] = 0;
    }
    loads_.push_back(size);
    used_.push_back(1);
    placement_[item] = static_cast<int>(existing);
    assign(item + 1, emit);
    loads_.pop_back();
    used_.pop_back();
  }

  void prune() {
    std::vector<std::vector<Tokens>> sorted(partial_.size());
    std::vector<size_t> order(partial_.size());
    for (size_t i = 0; i < partial_.size(); ++i) {
      sorted[i] = partial_[i].loads;
      std::sort(sorted[i].begin(), sorted[i].end());
      order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (sorted[a].size() != sorted[b].size()) return sorted[a].size() < sorted[b].size();
      if (partial_[a].cost != partial_[b].cost) return partial_[a].cost < partial_[b].cost;
      // A dominator of equal size and cost has a strictly smaller load sum.
      return std::accumulate(sorted[a].begin(), sorted[a].end(), Tokens{0}) <
             std::accumulate(sorted[b].begin(), sorted[b].end(), Tokens{0});
    });
    std::vector<size_t> kept;
    for (size_t i : order) {
      bool dominated = false;
      for (size_t k : kept) {
        if (dominates(partial_[k], sorted[k], partial_[i], sorted[i])) {
          dominated = true;
          break;
        }
      }
      if (!dominated) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<DpState> survivors;
    survivors.reserve(kept.size());
    for (size_t i : kept) survivors.push_back(std::move(partial_[i]));
    partial_ = std::move(survivors);
  }

  Tokens bin_capacity_;
  const ExactLimits& limits_;
  NodeId node_;
  std::vector<DpState> partial_;
  std::vector<Tokens> items_;
  std::vector<Tokens> loads_;
  std::vector<char> used_;
  std::vector<int> placement_;
};

}  // namespace

PackPlan multi_path_dp(const TrajectoryTree& tree, const TreeAnnotations& ann, Capacity cap,
                       const ExactLimits& limits) {
  require_packable(tree, ann, cap);
  const size_t n = tree.node_count();
  std::vector<std::vector<DpState>> states(n);

  for (size_t i = n; i-- > 0;) {
    const auto u = static_cast<NodeId>(i);
    const TreeNode& node = tree.node(u);
    const Tokens bin_capacity = cap.tokens - ann.prefix_length[i];

    size_t item_bound = node.terminals.size();
    for (NodeId c : node.children) {
      size_t widest = 0;
      for (const DpState& s : states[static_cast<size_t>(c)]) {
        if (s.loads.back() + tree.node(c).length() <= bin_capacity) widest = std::max(widest, s.loads.size());
      }
      item_bound += widest;
    }
    if (item_bound > limits.max_items) {
      throw ExactModeLimitExceeded("node " + std::to_string(u) + " receives up to " + std::to_string(item_bound) +
                                   " lifted items (limit " + std::to_string(limits.max_items) +
                                   "); use the heuristic packer");
    }

    NodeMerger merger(bin_capacity, limits, u);
    for (NodeId c : node.children) {
      merger.add_source(states[static_cast<size_t>(c)], tree.node(c).length());
    }
    for (size_t t = 0; t < node.terminals.size(); ++t) {
      merger.add_source(terminal_states(), 0);
    }
    states[i] = merger.finish();
    if (states[i].empty()) {
      // Only possible if some leaf alone exceeds the capacity.
      throw InfeasibleLeaf("subtree of node " + std::to_string(u) + " cannot be covered");
    }
  }

  // The root segment is paid once per traversal; loads exclude it.
  const Tokens root_length = tree.node(tree.root()).length();
  size_t best = 0;
  auto total = [&](const DpState& s) { return s.cost + root_length * static_cast<Tokens>(s.loads.size()); };
  for (size_t k = 1; k < states[0].size(); ++k) {
    const DpState& cand = states[0][k];
    const DpState& cur = states[0][best];
    if (total(cand) < total(cur) || (total(cand) == total(cur) && cand.loads.size() < cur.loads.size())) {
      best = k;
    }
  }

  // Top-down: map every node's bins onto root traversals.
  std::vector<int> chosen(n, -1);
  std::vector<std::vector<int>> to_traversal(n);
  chosen[0] = static_cast<int>(best);
  to_traversal[0].resize(states[0][best].loads.size());
  std::iota(to_traversal[0].begin(), to_traversal[0].end(), 0);
  std::vector<std::vector<LeafIndex>> groups(to_traversal[0].size());
  for (size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    const DpState& s = states[i][static_cast<size_t>(chosen[i])];
    size_t source = 0;
    for (NodeId c : node.children) {
      const Choice& choice = s.choices[source++];
      const auto ci = static_cast<size_t>(c);
      chosen[ci] = choice.state;
      for (int b : choice.bins) {
        to_traversal[ci].push_back(to_traversal[i][static_cast<size_t>(b)]);
      }
    }
    for (LeafIndex leaf : node.terminals) {
      const Choice& choice = s.choices[source++];
      groups[static_cast<size_t>(to_traversal[i][static_cast<size_t>(choice.bins.front())])].push_back(leaf);
    }
  }

  PackPlan plan;
  plan.method = "multi";
  plan.cost_model = CostModel::kSharedSubtree;
  plan.capacity = cap.tokens;
  for (auto& group : groups) {
    plan.traversals.push_back(make_traversal(tree, ann, std::move(group)));
  }
  finish_plan(tree, plan);
  if (plan.total_cost != total(states[0][best])) {
    throw std::logic_error("multi-path reconstruction cost " + std::to_string(plan.total_cost) +
                           " differs from DP optimum " + std::to_string(total(states[0][best])));
  }
  return plan;
}

}  // namespace prefix_forest
