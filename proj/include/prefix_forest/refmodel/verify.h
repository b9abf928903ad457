// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gradient-equivalence harness: tree-packed training against per-trajectory
// baseline training on the same parameters.

#pragma once

#include <cstddef>
#include <string>

#include "prefix_forest/pack_plan.h"
#include "prefix_forest/refmodel/model.h"
#include "prefix_forest/trajectory_forest.h"

namespace prefix_forest::refmodel {

inline constexpr double kRelErrFloor = 1e-12;

template <class T>
struct RunResult {
  ParamGrads<T> grads;
  T loss = 0;
};

// One forward/backward per leaf on baseline_emit, accumulated in leaf-id order.
template <class T>
RunResult<T> run_baseline(const TrajectoryTree& tree, const ModelParams<T>& params, const RunOptions& options = {});

// One forward/backward per traversal on emit, accumulated in plan order.
// Throws PlanMismatch for traversals that do not belong to the tree.
template <class T>
RunResult<T> run_tree(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                      const RunOptions& options = {});

struct GradReport {
  double max_abs_err = 0.0;
  // |a - b| / max(|a|, |b|, kRelErrFloor)
  double max_rel_err = 0.0;
  std::string param;  // tensor holding the largest relative error
  size_t index = 0;   // flat index inside that tensor
  double tolerance = 0.0;
  bool pass = true;
};

// pass iff max_rel_err <= tol. Throws ShapeMismatch.
template <class T>
GradReport compare_grads(const ParamGrads<T>& a, const ParamGrads<T>& b, double tol);

// Largest absolute logit and final-hidden-state difference between each leaf
// path of every tree batch and that leaf's baseline batch. The baseline is
// always run with the shared-prefix mask.
template <class T>
double prefix_identity_error(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                             MaskMode tree_mask = MaskMode::kSharedPrefix);

struct VerifyOptions {
  double tolerance = 1e-9;         // gradient relative error
  double loss_tolerance = 1e-10;   // relative
  double prefix_tolerance = 1e-12;  // absolute
  RunOptions run;                   // options of the tree run under test
};

struct ControlResult {
  bool applicable = false;
  bool detected = false;  // the corrupted run failed, as it must
  double error = 0.0;
};

struct VerifyReport {
  GradReport grads;
  double baseline_loss = 0.0;
  double tree_loss = 0.0;
  double loss_rel_err = 0.0;
  bool loss_pass = false;
  double prefix_max_abs = 0.0;
  bool prefix_pass = false;
  // Literal dY scaling against per-token loss weights on the same plan.
  GradReport scaler_paths;
  ControlResult scaler_control;  // scales forced to 1 on the full-tree plan
  ControlResult mask_control;    // plain causal mask on the full-tree plan
  bool pass = false;
};

// Runs the equivalence checks plus both negative controls. pass requires the
// checks to hold and every applicable control to be detected.
template <class T>
VerifyReport verify(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                    const VerifyOptions& options = {});

// Single traversal covering every leaf, charged as a shared subtree.
PackPlan full_tree_plan(const TrajectoryTree& tree);

}  // namespace prefix_forest::refmodel
