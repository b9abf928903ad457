// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generators for test corpora, benchmarks and the CLI's default
// verification tree.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

struct PorDatasetParams {
  int leaves = 16;
  Tokens total_tokens = 15000;
  TokenId vocab = 50000;
  std::uint64_t seed = 1;
};

struct PorDataset {
  PorDatasetParams params;
  Tokens shared_prefix = 0;  // tokens common to every trajectory
  double target = 0.0;
  std::vector<Trajectory> trajectories;
};

// Fixed leaf count and total token count; only the shared prefix length
// varies, so POR = (leaves - 1) * prefix / total_tokens. Throws InputError
// when the target is not reachable with an integer prefix.
PorDataset por_target_dataset(double target, const PorDatasetParams& params = {});

struct RandomTreeOptions {
  int min_leaves = 1;
  int max_leaves = 8;
  int max_nodes = 16;
  Tokens min_segment = 1;
  Tokens max_segment = 10;
  TokenId vocab = 1000;
  double prefix_leaf_prob = 0.15;     // a leaf ending on a node with children
  double duplicate_leaf_prob = 0.05;  // a second leaf on the same node
  double empty_root_prob = 0.1;       // synthetic l = 0 root
  bool random_weights = false;        // draw weights from {0.5, 1.0, 2.0}
  bool random_supervision = false;    // draw supervised_from below L(leaf)
};

// Uniform random recursive tree shape, repaired so every segment is maximal.
// Leaf ids are shuffled so id order differs from tree order.
TreeSpec random_tree_spec(std::mt19937_64& rng, const RandomTreeOptions& options);
TrajectoryTree random_tree(std::mt19937_64& rng, const RandomTreeOptions& options);

// Trees for gradient verification: 2 to 12 leaves, segments of 1 to 6 tokens
// over a 97-token vocabulary, random weights and supervision offsets.
RandomTreeOptions verification_tree_options();

// Retries until the root segment has at least two tokens and some node
// branches, so both negative controls have something to detect.
TrajectoryTree verification_tree(std::mt19937_64& rng, const RandomTreeOptions& options = verification_tree_options());

// Random recursive tree with exactly `nodes` nodes, for scale tests.
TrajectoryTree large_random_tree(std::mt19937_64& rng, size_t nodes, Tokens max_segment = 8);

}  // namespace prefix_forest
