// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "prefix_forest/errors.h"

namespace prefix_forest {

namespace {

std::string leaf_name(const char* prefix, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
  return buf;
}

struct ShapeNode {
  int parent = -1;
  std::vector<int> children;
  int terminals = 0;
  Tokens length = 0;
};

// Converts a parent-linked shape into a nested spec; parents precede children.
TreeSpec to_spec(std::vector<ShapeNode>& shape, std::vector<TreeSpec>& specs) {
  for (size_t i = shape.size(); i-- > 0;) {
    std::reverse(specs[i].children.begin(), specs[i].children.end());
    if (i > 0) specs[static_cast<size_t>(shape[i].parent)].children.push_back(std::move(specs[i]));
  }
  return std::move(specs[0]);
}

}  // namespace

PorDataset por_target_dataset(double target, const PorDatasetParams& params) {
  if (params.leaves < 2 || params.total_tokens < params.leaves) {
    throw InputError("POR dataset needs at least two leaves and one token per leaf");
  }
  const double exact = target * static_cast<double>(params.total_tokens) / (params.leaves - 1);
  const auto prefix = static_cast<Tokens>(std::llround(exact));
  const double achieved = static_cast<double>((params.leaves - 1) * prefix) / static_cast<double>(params.total_tokens);
  if (std::abs(achieved - target) > 1e-12) {
    throw InputError("POR target " + std::to_string(target) + " needs a fractional shared prefix");
  }
  const Tokens base = params.total_tokens / params.leaves;
  const Tokens extra = params.total_tokens % params.leaves;
  if (prefix >= base) throw InputError("POR target too high for the requested lengths");
  if (params.vocab <= params.leaves) throw InputError("vocabulary too small");

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<TokenId> body(0, params.vocab - params.leaves - 1);
  std::vector<TokenId> shared(static_cast<size_t>(prefix));
  for (auto& t : shared) t = body(rng);

  PorDataset out;
  out.params = params;
  out.shared_prefix = prefix;
  out.target = target;
  for (int i = 0; i < params.leaves; ++i) {
    Trajectory t;
    t.id = leaf_name("traj-", static_cast<size_t>(i));
    const Tokens length = base + (i < extra ? 1 : 0);
    t.tokens = shared;
    // A distinct token right after the prefix keeps the overlap exactly `prefix`.
    t.tokens.push_back(params.vocab - params.leaves + i);
    while (static_cast<Tokens>(t.tokens.size()) < length) t.tokens.push_back(body(rng));
    out.trajectories.push_back(std::move(t));
  }
  return out;
}

TreeSpec random_tree_spec(std::mt19937_64& rng, const RandomTreeOptions& options) {
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
  std::uniform_int_distribution<TokenId> token(0, options.vocab - 1);
  std::uniform_int_distribution<Tokens> seg_len(options.min_segment, options.max_segment);
  static constexpr double kWeights[] = {0.5, 1.0, 2.0};

  for (;;) {
    const int m = std::uniform_int_distribution<int>(1, options.max_nodes)(rng);
    std::vector<ShapeNode> shape(static_cast<size_t>(m));
    for (int i = 1; i < m; ++i) {
      const int p = std::uniform_int_distribution<int>(0, i - 1)(rng);
      shape[static_cast<size_t>(i)].parent = p;
      shape[static_cast<size_t>(p)].children.push_back(i);
    }
    const bool empty_root = shape[0].children.size() >= 2 && chance(options.empty_root_prob);
    int leaves = 0;
    for (size_t i = 0; i < shape.size(); ++i) {
      ShapeNode& node = shape[i];
      if (node.children.empty()) {
        node.terminals = chance(options.duplicate_leaf_prob) ? 2 : 1;
      } else if (node.children.size() == 1) {
        node.terminals = 1;  // keeps the segment maximal
      } else if (!(i == 0 && empty_root) && chance(options.prefix_leaf_prob)) {
        node.terminals = 1;
      }
      leaves += node.terminals;
      node.length = (i == 0 && empty_root) ? 0 : seg_len(rng);
    }
    if (leaves < options.min_leaves || leaves > options.max_leaves) continue;

    std::vector<Tokens> depth(shape.size(), 0);
    std::vector<TreeSpec> specs(shape.size());
    std::vector<size_t> names(static_cast<size_t>(leaves));
    std::iota(names.begin(), names.end(), size_t{0});
    std::shuffle(names.begin(), names.end(), rng);
    size_t next_name = 0;
    for (size_t i = 0; i < shape.size(); ++i) {
      const ShapeNode& node = shape[i];
      depth[i] = (node.parent >= 0 ? depth[static_cast<size_t>(node.parent)] : 0) + node.length;
      std::set<TokenId> taken;
      if (node.parent >= 0) {
        for (int sib : shape[static_cast<size_t>(node.parent)].children) {
          if (sib >= static_cast<int>(i)) break;
          taken.insert(specs[static_cast<size_t>(sib)].segment.front());
        }
      }
      for (Tokens k = 0; k < node.length; ++k) {
        TokenId t = token(rng);
        while (k == 0 && taken.count(t)) t = token(rng);
        specs[i].segment.push_back(t);
      }
      for (int l = 0; l < node.terminals; ++l) {
        specs[i].leaf_ids.push_back(leaf_name("leaf-", names[next_name++]));
        if (options.random_weights) {
          specs[i].leaf_weights.push_back(kWeights[std::uniform_int_distribution<int>(0, 2)(rng)]);
        }
        if (options.random_supervision) {
          const bool offset = chance(0.5);
          specs[i].leaf_supervised_from.push_back(
              offset ? std::uniform_int_distribution<Tokens>(0, depth[i] - 1)(rng) : 0);
        }
      }
    }
    return to_spec(shape, specs);
  }
}

TrajectoryTree random_tree(std::mt19937_64& rng, const RandomTreeOptions& options) {
  return TrajectoryTree::from_spec(random_tree_spec(rng, options));
}

RandomTreeOptions verification_tree_options() {
  RandomTreeOptions o;
  o.min_leaves = 2;
  o.max_leaves = 12;
  o.max_nodes = 20;
  o.min_segment = 1;
  o.max_segment = 6;
  o.vocab = 97;
  o.empty_root_prob = 0.0;
  o.random_weights = true;
  o.random_supervision = true;
  return o;
}

TrajectoryTree verification_tree(std::mt19937_64& rng, const RandomTreeOptions& options) {
  for (;;) {
    TreeSpec spec = random_tree_spec(rng, options);
    if (spec.segment.size() < 2) continue;
    TrajectoryTree tree = TrajectoryTree::from_spec(spec);
    for (const TreeNode& node : tree.nodes()) {
      if (node.children.size() >= 2) return tree;
    }
  }
}

TrajectoryTree large_random_tree(std::mt19937_64& rng, size_t nodes, Tokens max_segment) {
  if (nodes == 0) throw InputError("tree needs at least one node");
  std::uniform_int_distribution<TokenId> token(0, 999);
  std::uniform_int_distribution<Tokens> seg_len(1, max_segment);
  std::vector<ShapeNode> shape(nodes);
  for (size_t i = 1; i < nodes; ++i) {
    const auto p = std::uniform_int_distribution<size_t>(0, i - 1)(rng);
    shape[i].parent = static_cast<int>(p);
    shape[p].children.push_back(static_cast<int>(i));
  }
  std::vector<TreeSpec> specs(nodes);
  size_t leaf_no = 0;
  for (size_t i = 0; i < nodes; ++i) {
    if (shape[i].children.size() <= 1) specs[i].leaf_ids.push_back(leaf_name("leaf-", leaf_no++));
    const Tokens length = seg_len(rng);
    // Sibling ordinal as first token keeps first tokens distinct.
    TokenId first = 0;
    if (shape[i].parent >= 0) {
      const auto& sibs = shape[static_cast<size_t>(shape[i].parent)].children;
      first = std::find(sibs.begin(), sibs.end(), static_cast<int>(i)) - sibs.begin();
    }
    specs[i].segment.push_back(first);
    for (Tokens k = 1; k < length; ++k) specs[i].segment.push_back(token(rng));
  }
  return TrajectoryTree::from_spec(to_spec(shape, specs));
}

}  // namespace prefix_forest
