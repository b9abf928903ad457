// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/trajectory_forest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>
#include <utility>

#include "prefix_forest/errors.h"

namespace prefix_forest {

// Mutable, arbitrarily numbered node storage shared by both construction paths.
struct DraftNode {
  std::vector<TokenId> segment;
  std::vector<size_t> children;
  std::vector<Leaf> terminals;  // Leaf::node unset until finalize
  std::map<TokenId, size_t> child_by_token;
};

class TreeAssembler {
 public:
  // Renumbers the draft into preorder and checks every trie invariant.
  static TrajectoryTree finalize(const std::vector<DraftNode>& draft, size_t root) {
    TrajectoryTree tree;
    std::vector<std::pair<size_t, NodeId>> stack{{root, kNoNode}};
    tree.nodes_.reserve(draft.size());
    while (!stack.empty()) {
      auto [src, parent] = stack.back();
      stack.pop_back();
      const auto id = static_cast<NodeId>(tree.nodes_.size());
      const DraftNode& d = draft[src];
      TreeNode node;
      node.segment = d.segment;
      node.parent = parent;
      for (const Leaf& t : d.terminals) {
        Leaf leaf = t;
        leaf.node = id;
        const auto li = static_cast<LeafIndex>(tree.leaves_.size());
        if (!tree.leaf_by_id_.emplace(leaf.id, li).second) {
          throw InputError("duplicate trajectory id '" + leaf.id + "'");
        }
        node.terminals.push_back(li);
        node.leaf_weight += leaf.weight;
        tree.leaves_.push_back(std::move(leaf));
      }
      tree.nodes_.push_back(std::move(node));
      if (parent != kNoNode) {
        tree.nodes_[static_cast<size_t>(parent)].children.push_back(id);
      }
      for (auto it = d.children.rbegin(); it != d.children.rend(); ++it) {
        stack.emplace_back(*it, id);
      }
    }
    // Children were pushed in order, so each subtree is contiguous.
    for (size_t i = tree.nodes_.size(); i-- > 0;) {
      TreeNode& n = tree.nodes_[i];
      n.subtree_end = n.children.empty() ? static_cast<NodeId>(i + 1)
                                         : tree.nodes_[static_cast<size_t>(n.children.back())].subtree_end;
    }
    validate(tree);
    return tree;
  }

 private:
  static void validate(const TrajectoryTree& tree) {
    const auto& nodes = tree.nodes_;
    if (nodes.empty()) {
      throw InputError("tree has no nodes");
    }
    std::vector<Tokens> depth(nodes.size(), 0);
    for (size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      const std::string where = "node " + std::to_string(i);
      if (i == 0) {
        if (n.segment.empty() && !n.terminals.empty()) {
          throw InputError("empty root cannot terminate a trajectory");
        }
        if (n.segment.empty() && n.children.empty()) {
          throw InputError("tree is empty");
        }
      } else if (n.segment.empty()) {
        throw InputError(where + ": empty segment below the root");
      }
      for (TokenId t : n.segment) {
        if (t < 0) {
          throw InputError(where + ": negative token id " + std::to_string(t));
        }
      }
      if (n.children.empty() && n.terminals.empty()) {
        throw InputError(where + ": leaf node without a trajectory id");
      }
      std::unordered_set<TokenId> first_tokens;
      for (NodeId c : n.children) {
        const TreeNode& child = nodes[static_cast<size_t>(c)];
        if (!child.segment.empty() && !first_tokens.insert(child.segment.front()).second) {
          throw InputError(where + ": siblings share first token " + std::to_string(child.segment.front()));
        }
      }
      depth[i] = (n.parent == kNoNode ? 0 : depth[static_cast<size_t>(n.parent)]) + n.length();
    }
    for (const Leaf& leaf : tree.leaves_) {
      if (!std::isfinite(leaf.weight) || leaf.weight < 0.0) {
        throw InputError("trajectory '" + leaf.id + "': weight must be finite and non-negative");
      }
      const Tokens length = depth[static_cast<size_t>(leaf.node)];
      if (leaf.supervised_from < 0 || leaf.supervised_from >= length) {
        throw InputError("trajectory '" + leaf.id + "': supervised_from out of range");
      }
    }
  }
};

namespace {

void add_spec(const TreeSpec& spec, std::vector<DraftNode>& draft, size_t index) {
  DraftNode& d = draft[index];
  d.segment = spec.segment;
  if (!spec.leaf_weights.empty() && spec.leaf_weights.size() != spec.leaf_ids.size()) {
    throw InputError("leaf_weights length differs from leaf_ids");
  }
  if (!spec.leaf_supervised_from.empty() && spec.leaf_supervised_from.size() != spec.leaf_ids.size()) {
    throw InputError("leaf_supervised_from length differs from leaf_ids");
  }
  for (size_t i = 0; i < spec.leaf_ids.size(); ++i) {
    Leaf leaf;
    leaf.id = spec.leaf_ids[i];
    leaf.weight = spec.leaf_weights.empty() ? 1.0 : spec.leaf_weights[i];
    leaf.supervised_from = spec.leaf_supervised_from.empty() ? 0 : spec.leaf_supervised_from[i];
    d.terminals.push_back(std::move(leaf));
  }
}

}  // namespace

TrajectoryTree TrajectoryTree::from_spec(const TreeSpec& spec) {
  std::vector<DraftNode> draft;
  std::vector<std::pair<const TreeSpec*, size_t>> stack;
  draft.emplace_back();
  stack.emplace_back(&spec, 0);
  while (!stack.empty()) {
    auto [s, index] = stack.back();
    stack.pop_back();
    add_spec(*s, draft, index);
    for (const TreeSpec& child : s->children) {
      const size_t ci = draft.size();
      draft.emplace_back();
      draft[index].children.push_back(ci);
      stack.emplace_back(&child, ci);
    }
  }
  return TreeAssembler::finalize(draft, 0);
}

std::optional<LeafIndex> TrajectoryTree::find_leaf(std::string_view id) const {
  auto it = leaf_by_id_.find(std::string(id));
  if (it == leaf_by_id_.end()) {
    return std::nullopt;
  }
  return it->second;
}

LeafIndex TrajectoryTree::leaf_index(std::string_view id) const {
  if (auto found = find_leaf(id)) {
    return *found;
  }
  throw InputError("unknown leaf id '" + std::string(id) + "'");
}

std::vector<NodeId> TrajectoryTree::path_to(NodeId u) const {
  std::vector<NodeId> path;
  for (NodeId v = u; v != kNoNode; v = node(v).parent) {
    path.push_back(v);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<TokenId> TrajectoryTree::leaf_tokens(LeafIndex leaf_index) const {
  std::vector<TokenId> tokens;
  for (NodeId v : path_to(leaf(leaf_index).node)) {
    const auto& seg = node(v).segment;
    tokens.insert(tokens.end(), seg.begin(), seg.end());
  }
  return tokens;
}

std::vector<LeafIndex> TrajectoryTree::subtree_leaves(NodeId u) const {
  std::vector<LeafIndex> out;
  for (NodeId v = u; v < node(u).subtree_end; ++v) {
    const auto& t = node(v).terminals;
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<LeafIndex> TrajectoryTree::leaves_by_id() const {
  std::vector<LeafIndex> order(leaves_.size());
  for (size_t i = 0; i < order.size(); ++i) {
    order[i] = static_cast<LeafIndex>(i);
  }
  std::sort(order.begin(), order.end(),
            [&](LeafIndex a, LeafIndex b) { return leaf(a).id < leaf(b).id; });
  return order;
}

TreeSpec TrajectoryTree::to_spec() const {
  std::vector<TreeSpec> specs(nodes_.size());
  // Children have larger preorder indices, so a reverse sweep finishes them first.
  for (size_t i = nodes_.size(); i-- > 0;) {
    const TreeNode& n = nodes_[i];
    TreeSpec& s = specs[i];
    s.segment = n.segment;
    bool default_weights = true;
    bool default_supervision = true;
    for (LeafIndex li : n.terminals) {
      const Leaf& l = leaf(li);
      s.leaf_ids.push_back(l.id);
      s.leaf_weights.push_back(l.weight);
      s.leaf_supervised_from.push_back(l.supervised_from);
      default_weights = default_weights && l.weight == 1.0;
      default_supervision = default_supervision && l.supervised_from == 0;
    }
    if (default_weights) s.leaf_weights.clear();
    if (default_supervision) s.leaf_supervised_from.clear();
    for (NodeId c : n.children) {
      s.children.push_back(std::move(specs[static_cast<size_t>(c)]));
    }
  }
  return std::move(specs[0]);
}

TrajectoryTree build_forest(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) {
    throw InputError("no trajectories to merge");
  }
  // Radix trie under a synthetic root; node 0 is that root.
  std::vector<DraftNode> draft(1);
  for (const Trajectory& traj : trajectories) {
    if (traj.tokens.empty()) {
      throw InputError("trajectory '" + traj.id + "' has no tokens");
    }
    size_t cur = 0;
    size_t pos = 0;
    const size_t len = traj.tokens.size();
    while (true) {
      if (pos == len) {
        draft[cur].terminals.push_back(Leaf{traj.id, kNoNode, traj.weight, traj.supervised_from});
        break;
      }
      const TokenId key = traj.tokens[pos];
      auto found = draft[cur].child_by_token.find(key);
      if (found == draft[cur].child_by_token.end()) {
        DraftNode leaf;
        leaf.segment.assign(traj.tokens.begin() + static_cast<std::ptrdiff_t>(pos), traj.tokens.end());
        leaf.terminals.push_back(Leaf{traj.id, kNoNode, traj.weight, traj.supervised_from});
        const size_t id = draft.size();
        draft.push_back(std::move(leaf));
        draft[cur].child_by_token.emplace(key, id);
        draft[cur].children.push_back(id);
        break;
      }
      const size_t child = found->second;
      const auto& seg = draft[child].segment;
      size_t common = 0;
      while (common < seg.size() && pos + common < len && seg[common] == traj.tokens[pos + common]) {
        ++common;
      }
      if (common < seg.size()) {
        // Split the child: the shared part becomes a new node taking its place.
        DraftNode mid;
        mid.segment.assign(seg.begin(), seg.begin() + static_cast<std::ptrdiff_t>(common));
        const size_t mid_id = draft.size();
        draft.push_back(std::move(mid));
        auto& child_node = draft[child];
        child_node.segment.erase(child_node.segment.begin(),
                                 child_node.segment.begin() + static_cast<std::ptrdiff_t>(common));
        draft[mid_id].children.push_back(child);
        draft[mid_id].child_by_token.emplace(draft[child].segment.front(), child);
        draft[cur].child_by_token[key] = mid_id;
        auto& siblings = draft[cur].children;
        *std::find(siblings.begin(), siblings.end(), child) = mid_id;
        cur = mid_id;
      } else {
        cur = child;
      }
      pos += common;
    }
  }
  size_t root = 0;
  if (draft[0].children.size() == 1) {
    root = draft[0].children.front();
  }
  return TreeAssembler::finalize(draft, root);
}

TreeAnnotations annotate(const TrajectoryTree& tree) {
  const size_t n = tree.node_count();
  TreeAnnotations ann;
  ann.prefix_length.assign(n, 0);
  ann.leaf_count.assign(n, 0);
  ann.residual_length.assign(n, 0);
  ann.subtree_tokens.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    const Tokens parent_prefix = node.parent == kNoNode ? 0 : ann.prefix_length[static_cast<size_t>(node.parent)];
    ann.prefix_length[i] = parent_prefix + node.length();
  }
  // Reverse preorder visits children before parents.
  for (size_t i = n; i-- > 0;) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    ann.leaf_count[i] += static_cast<Tokens>(node.terminals.size());
    ann.subtree_tokens[i] += node.length();
    if (node.parent != kNoNode) {
      const auto p = static_cast<size_t>(node.parent);
      ann.leaf_count[p] += ann.leaf_count[i];
      ann.residual_length[p] += ann.leaf_count[i] * node.length() + ann.residual_length[i];
      ann.subtree_tokens[p] += ann.subtree_tokens[i];
    }
  }
  return ann;
}

Tokens linear_token_total(const TrajectoryTree& tree) {
  const TreeAnnotations ann = annotate(tree);
  Tokens total = 0;
  for (const Leaf& leaf : tree.leaves()) {
    total += ann.depth(leaf.node);
  }
  return total;
}

Tokens tree_token_total(const TrajectoryTree& tree) {
  Tokens total = 0;
  for (const TreeNode& node : tree.nodes()) {
    total += node.length();
  }
  return total;
}

double por(const TrajectoryTree& tree) {
  const auto linear = static_cast<double>(linear_token_total(tree));
  const auto shared = static_cast<double>(tree_token_total(tree));
  return 1.0 - shared / linear;
}

std::vector<CurvePoint> active_trajectory_curve(const TrajectoryTree& tree) {
  const TreeAnnotations ann = annotate(tree);
  Tokens max_depth = 0;
  for (const Leaf& leaf : tree.leaves()) {
    max_depth = std::max(max_depth, ann.depth(leaf.node));
  }
  const auto size = static_cast<size_t>(max_depth);
  // Difference arrays: +1 at span start, -1 one past the span end.
  std::vector<Tokens> baseline(size + 1, 0);
  std::vector<Tokens> shared(size + 1, 0);
  for (const Leaf& leaf : tree.leaves()) {
    baseline[0] += 1;
    baseline[static_cast<size_t>(ann.depth(leaf.node))] -= 1;
  }
  for (size_t i = 0; i < tree.node_count(); ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    if (node.segment.empty()) continue;
    shared[static_cast<size_t>(ann.prefix_length[i] - node.length())] += 1;
    shared[static_cast<size_t>(ann.prefix_length[i])] -= 1;
  }
  std::vector<CurvePoint> curve(size);
  Tokens b = 0;
  Tokens t = 0;
  for (size_t p = 0; p < size; ++p) {
    b += baseline[p];
    t += shared[p];
    curve[p] = CurvePoint{static_cast<Tokens>(p), b, t};
  }
  return curve;
}

}  // namespace prefix_forest
