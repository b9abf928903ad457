// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/pack_plan.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest {

enum class InputKind { kTrajectories, kTree };

// One JSON object per line: {"id", "tokens", "weight"?, "supervised_from"?}.
// Blank lines are skipped. Errors name the source and 1-based line number.
std::vector<Trajectory> parse_trajectories_jsonl(std::istream& in, std::string_view source = "<input>");
std::vector<Trajectory> read_trajectories_jsonl(const std::filesystem::path& path);

// Recursive {"segment", "children", "leaf_ids", "leaf_weights"?,
// "leaf_supervised_from"?} object.
TreeSpec parse_tree_json(std::string_view text);
std::string tree_to_json(const TrajectoryTree& tree);

// Reads either input kind and builds the tree. Throws InputError.
TrajectoryTree load_tree(const std::filesystem::path& path, InputKind kind);

std::string plan_to_json(const TrajectoryTree& tree, const PackPlan& plan);
// Throws PlanMismatch for leaves or nodes the tree does not have.
PackPlan parse_plan_json(const TrajectoryTree& tree, std::string_view text);

// Tokens, spans with ancestor lists, position ids, tree scales, labels and
// the supervised mask. The attention mask is stored as span ancestry, never densely.
std::string batch_to_json(const TrajectoryTree& tree, const PackedBatch& batch);

std::string read_text_file(const std::filesystem::path& path);
// Writes a sibling temporary file, then renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace prefix_forest
