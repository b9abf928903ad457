// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures, corpora and the finite-difference oracle used by the unit,
// property and acceptance binaries.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/refmodel/model.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest::testing {

TreeSpec leaf_spec(std::vector<TokenId> segment, std::string id, double weight = 1.0, Tokens supervised_from = 0);

// root [1..5] with leaves a = [6,7,8] and b = [9,10,11,12].
TrajectoryTree star_tree();

// r -> u -> {v1, v5}; v1 -> {leaf1, leaf2, leaf3}; v5 -> {leaf4, leaf5}.
TrajectoryTree fig4_tree(std::vector<double> weights = {});

// Two leaves below a 4-token root, one with weight 0.5 and one with 2.0.
TrajectoryTree two_leaf_tree();

Tokens max_leaf_length(const TrajectoryTree& tree, const TreeAnnotations& ann);

struct PackingCase {
  TrajectoryTree tree;
  Tokens capacity = 0;
};

// Trees with at most 8 leaves and 16 nodes, segments of 1 to 10 tokens;
// capacity uniform over [max L(leaf), tree_token_total + 5].
std::vector<PackingCase> packing_corpus(std::uint64_t seed, size_t count);

struct VerifyCase {
  TrajectoryTree tree;
  PackPlan plan;
  std::uint64_t param_seed = 0;
};

// Verification trees packed in rotation by the multi-path, single-path and
// heuristic packers with capacity uniform over [max L(leaf), tree_token_total].
std::vector<VerifyCase> verification_corpus(std::uint64_t seed, size_t count);

struct FdSample {
  std::string param;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

// Central differences of the summed plan loss in binary128 at `count` random
// coordinates, compared with `analytic`.
std::vector<FdSample> finite_difference_check(const TrajectoryTree& tree, const PackPlan& plan,
                                              const refmodel::ModelParams<double>& params,
                                              const refmodel::ParamGrads<double>& analytic, size_t count,
                                              std::mt19937_64& rng, double eps = 1e-6);

}  // namespace prefix_forest::testing
