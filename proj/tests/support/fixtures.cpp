// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.h"

#include <algorithm>
#include <cmath>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/packer_exact.h"
#include "prefix_forest/packer_heuristic.h"
#include "prefix_forest/refmodel/scalar.h"
#include "prefix_forest/refmodel/verify.h"
#include "prefix_forest/synthetic.h"

namespace prefix_forest::testing {

using refmodel::Matrix;
using refmodel::ModelParams;
using refmodel::Quad;

TreeSpec leaf_spec(std::vector<TokenId> segment, std::string id, double weight, Tokens supervised_from) {
  TreeSpec s;
  s.segment = std::move(segment);
  s.leaf_ids = {std::move(id)};
  s.leaf_weights = {weight};
  s.leaf_supervised_from = {supervised_from};
  return s;
}

TrajectoryTree star_tree() {
  TreeSpec root;
  root.segment = {1, 2, 3, 4, 5};
  root.children = {leaf_spec({6, 7, 8}, "a"), leaf_spec({9, 10, 11, 12}, "b")};
  return TrajectoryTree::from_spec(root);
}

TrajectoryTree fig4_tree(std::vector<double> weights) {
  if (weights.empty()) weights.assign(5, 1.0);
  TreeSpec v1;
  v1.segment = {6, 7};
  v1.children = {leaf_spec({8, 9}, "leaf1", weights[0]), leaf_spec({10}, "leaf2", weights[1]),
                 leaf_spec({11, 12, 13}, "leaf3", weights[2])};
  TreeSpec v5;
  v5.segment = {14, 15, 16};
  v5.children = {leaf_spec({17, 18}, "leaf4", weights[3]), leaf_spec({19, 20}, "leaf5", weights[4])};
  TreeSpec u;
  u.segment = {4, 5};
  u.children = {v1, v5};
  TreeSpec r;
  r.segment = {1, 2, 3};
  r.children = {u};
  return TrajectoryTree::from_spec(r);
}

TrajectoryTree two_leaf_tree() {
  TreeSpec root;
  root.segment = {3, 14, 15, 92};
  root.children = {leaf_spec({65, 35, 89}, "x", 0.5), leaf_spec({79, 32, 38, 46}, "y", 2.0)};
  return TrajectoryTree::from_spec(root);
}

Tokens max_leaf_length(const TrajectoryTree& tree, const TreeAnnotations& ann) {
  Tokens best = 0;
  for (const Leaf& l : tree.leaves()) best = std::max(best, ann.depth(l.node));
  return best;
}

std::vector<PackingCase> packing_corpus(std::uint64_t seed, size_t count) {
  std::mt19937_64 rng(seed);
  const RandomTreeOptions options;
  std::vector<PackingCase> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    TrajectoryTree tree = random_tree(rng, options);
    const TreeAnnotations ann = annotate(tree);
    const Tokens lo = max_leaf_length(tree, ann);
    const Tokens hi = tree_token_total(tree) + 5;
    const Tokens cap = std::uniform_int_distribution<Tokens>(lo, hi)(rng);
    out.push_back({std::move(tree), cap});
  }
  return out;
}

std::vector<VerifyCase> verification_corpus(std::uint64_t seed, size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<VerifyCase> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    TrajectoryTree tree = verification_tree(rng);
    const TreeAnnotations ann = annotate(tree);
    const Tokens cap =
        std::uniform_int_distribution<Tokens>(max_leaf_length(tree, ann), tree_token_total(tree))(rng);
    PackPlan plan;
    switch (i % 3) {
      case 0: plan = multi_path_dp(tree, ann, Capacity{cap}); break;
      case 1: plan = reconstruct_plan(single_path_dp(tree, ann, Capacity{cap}), tree); break;
      default: plan = heuristic_pack(tree, ann, Capacity{cap}); break;
    }
    out.push_back({std::move(tree), std::move(plan), seed * 1000 + i});
  }
  return out;
}

namespace {

Quad plan_loss(const std::vector<PackedBatch>& batches, const ModelParams<Quad>& params) {
  Quad total = 0;
  for (const PackedBatch& b : batches) total += refmodel::forward(params, b).loss;
  return total;
}

}  // namespace

std::vector<FdSample> finite_difference_check(const TrajectoryTree& tree, const PackPlan& plan,
                                              const ModelParams<double>& params,
                                              const ModelParams<double>& analytic, size_t count,
                                              std::mt19937_64& rng, double eps) {
  std::vector<PackedBatch> batches;
  for (const Traversal& t : plan.traversals) batches.push_back(emit(tree, t));

  ModelParams<Quad> wide = refmodel::cast_params<Quad>(params);
  std::vector<std::pair<std::string, Matrix<Quad>*>> tensors;
  wide.visit([&](const std::string& name, Matrix<Quad>& m) { tensors.emplace_back(name, &m); });
  std::vector<const Matrix<double>*> grads;
  analytic.visit([&](const std::string&, const Matrix<double>& m) { grads.push_back(&m); });

  std::vector<FdSample> out;
  const Quad h = static_cast<Quad>(eps);
  for (size_t k = 0; k < count; ++k) {
    const size_t t = std::uniform_int_distribution<size_t>(0, tensors.size() - 1)(rng);
    Matrix<Quad>& m = *tensors[t].second;
    const size_t idx = std::uniform_int_distribution<size_t>(0, m.data.size() - 1)(rng);
    const Quad orig = m.data[idx];
    m.data[idx] = orig + h;
    const Quad up = plan_loss(batches, wide);
    m.data[idx] = orig - h;
    const Quad down = plan_loss(batches, wide);
    m.data[idx] = orig;

    FdSample s;
    s.param = tensors[t].first;
    s.index = idx;
    s.numeric = static_cast<double>((up - down) / (2 * h));
    s.analytic = grads[t]->data[idx];
    s.rel_err = std::abs(s.numeric - s.analytic) /
                std::max({std::abs(s.numeric), std::abs(s.analytic), refmodel::kRelErrFloor});
    out.push_back(s);
  }
  return out;
}

}  // namespace prefix_forest::testing
