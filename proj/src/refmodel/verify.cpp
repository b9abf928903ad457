// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/refmodel/verify.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/refmodel/scalar.h"

namespace prefix_forest::refmodel {

namespace {

template <class T>
void accumulate(ParamGrads<T>& into, ParamGrads<T>& from) {
  std::vector<Matrix<T>*> src;
  from.visit([&](const std::string&, Matrix<T>& m) { src.push_back(&m); });
  size_t i = 0;
  into.visit([&](const std::string&, Matrix<T>& m) { add_in_place(m, *src[i++]); });
}

template <class T>
RunResult<T> run_batches(const std::vector<PackedBatch>& batches, const ModelParams<T>& params,
                         const RunOptions& options) {
  RunResult<T> out{zero_params<T>(params.config), T(0)};
  for (const PackedBatch& batch : batches) {
    const ForwardResult<T> fwd = forward(params, batch, options);
    ParamGrads<T> g = backward(params, fwd, batch, options);
    accumulate(out.grads, g);
    out.loss += fwd.loss;
  }
  return out;
}

double max_abs_diff_rows(const auto& a, const std::vector<size_t>& rows, const auto& b) {
  double worst = 0.0;
  for (size_t k = 0; k < rows.size(); ++k) {
    for (size_t c = 0; c < a.cols; ++c) {
      worst = std::max(worst, static_cast<double>(scalar::abs(a(rows[k], c) - b(k, c))));
    }
  }
  return worst;
}

bool has_branch(const PackedBatch& batch) {
  for (size_t s = 1; s < batch.spans.size(); ++s) {
    if (batch.spans[s].parent != static_cast<int>(s) - 1) return true;
  }
  return false;
}

bool has_scaled_token(const PackedBatch& batch) {
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch.supervised_mask[i] && batch.tree_scale[i] != 1.0) return true;
  }
  return false;
}

}  // namespace

PackPlan full_tree_plan(const TrajectoryTree& tree) {
  const TreeAnnotations ann = annotate(tree);
  std::vector<LeafIndex> all(tree.leaf_count());
  std::iota(all.begin(), all.end(), LeafIndex{0});
  PackPlan plan;
  plan.method = "full_tree";
  plan.traversals.push_back(make_traversal(tree, ann, std::move(all)));
  plan.capacity = plan.traversals.front().cost;
  finish_plan(tree, plan);
  return plan;
}

template <class T>
RunResult<T> run_baseline(const TrajectoryTree& tree, const ModelParams<T>& params, const RunOptions& options) {
  std::vector<PackedBatch> batches;
  for (LeafIndex l : tree.leaves_by_id()) batches.push_back(baseline_emit(tree, l));
  return run_batches(batches, params, options);
}

template <class T>
RunResult<T> run_tree(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                      const RunOptions& options) {
  std::vector<PackedBatch> batches;
  for (const Traversal& t : plan.traversals) batches.push_back(emit(tree, t));
  return run_batches(batches, params, options);
}

template <class T>
GradReport compare_grads(const ParamGrads<T>& a, const ParamGrads<T>& b, double tol) {
  std::vector<std::pair<std::string, const Matrix<T>*>> left;
  a.visit([&](const std::string& name, const Matrix<T>& m) { left.emplace_back(name, &m); });
  GradReport r;
  r.tolerance = tol;
  size_t i = 0;
  b.visit([&](const std::string& name, const Matrix<T>& m) {
    require(i < left.size() && left[i].first == name && left[i].second->same_shape(m),
            "compare_grads: parameter layouts differ at '" + name + "'");
    const Matrix<T>& x = *left[i++].second;
    for (size_t k = 0; k < m.data.size(); ++k) {
      const double va = static_cast<double>(x.data[k]);
      const double vb = static_cast<double>(m.data[k]);
      const double abs_err = std::abs(va - vb);
      const double rel_err = abs_err / std::max({std::abs(va), std::abs(vb), kRelErrFloor});
      r.max_abs_err = std::max(r.max_abs_err, abs_err);
      if (rel_err > r.max_rel_err || r.param.empty()) {
        r.max_rel_err = rel_err;
        r.param = name;
        r.index = k;
      }
    }
  });
  require(i == left.size(), "compare_grads: parameter layouts differ");
  r.pass = r.max_rel_err <= tol;
  return r;
}

template <class T>
double prefix_identity_error(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                             MaskMode tree_mask) {
  std::map<LeafIndex, ForwardResult<T>> baseline;
  double worst = 0.0;
  for (const Traversal& t : plan.traversals) {
    const PackedBatch batch = emit(tree, t);
    const ForwardResult<T> fwd = forward(params, batch, RunOptions{tree_mask, ScalerMode::kLossWeight});
    for (size_t slot = 0; slot < batch.leaves.size(); ++slot) {
      const LeafIndex leaf = batch.leaves[slot];
      auto it = baseline.find(leaf);
      if (it == baseline.end()) {
        it = baseline.emplace(leaf, forward(params, baseline_emit(tree, leaf), RunOptions{})).first;
      }
      const std::vector<size_t> rows = leaf_path_indices(batch, slot);
      worst = std::max(worst, max_abs_diff_rows(fwd.logits, rows, it->second.logits));
      worst = std::max(worst, max_abs_diff_rows(fwd.hidden, rows, it->second.hidden));
    }
  }
  return worst;
}

template <class T>
VerifyReport verify(const TrajectoryTree& tree, const PackPlan& plan, const ModelParams<T>& params,
                    const VerifyOptions& options) {
  VerifyReport r;
  const RunResult<T> baseline = run_baseline(tree, params, RunOptions{});
  const RunResult<T> packed = run_tree(tree, plan, params, options.run);
  r.grads = compare_grads(packed.grads, baseline.grads, options.tolerance);
  r.baseline_loss = static_cast<double>(baseline.loss);
  r.tree_loss = static_cast<double>(packed.loss);
  r.loss_rel_err = std::abs(r.tree_loss - r.baseline_loss) / std::max(std::abs(r.baseline_loss), kRelErrFloor);
  r.loss_pass = r.loss_rel_err <= options.loss_tolerance;
  r.prefix_max_abs = prefix_identity_error(tree, plan, params, options.run.mask);
  r.prefix_pass = r.prefix_max_abs <= options.prefix_tolerance;

  const RunResult<T> literal =
      run_tree(tree, plan, params, RunOptions{options.run.mask, ScalerMode::kScaleFirstGradient});
  const RunResult<T> weighted = run_tree(tree, plan, params, RunOptions{options.run.mask, ScalerMode::kLossWeight});
  r.scaler_paths = compare_grads(literal.grads, weighted.grads, options.tolerance);

  const PackPlan full = full_tree_plan(tree);
  const PackedBatch full_batch = emit(tree, full.traversals.front());
  r.scaler_control.applicable = has_scaled_token(full_batch);
  if (r.scaler_control.applicable) {
    const RunResult<T> unscaled = run_tree(tree, full, params, RunOptions{MaskMode::kSharedPrefix, ScalerMode::kDisabled});
    const GradReport g = compare_grads(unscaled.grads, baseline.grads, options.tolerance);
    r.scaler_control.error = g.max_rel_err;
    r.scaler_control.detected = !g.pass;
  }
  r.mask_control.applicable = has_branch(full_batch);
  if (r.mask_control.applicable) {
    r.mask_control.error = prefix_identity_error(tree, full, params, MaskMode::kPlainCausal);
    r.mask_control.detected = r.mask_control.error > options.prefix_tolerance;
  }

  r.pass = r.grads.pass && r.loss_pass && r.prefix_pass && r.scaler_paths.pass &&
           (!r.scaler_control.applicable || r.scaler_control.detected) &&
           (!r.mask_control.applicable || r.mask_control.detected);
  return r;
}

#define PREFIX_FOREST_INSTANTIATE(T)                                                                          \
  template RunResult<T> run_baseline(const TrajectoryTree&, const ModelParams<T>&, const RunOptions&);       \
  template RunResult<T> run_tree(const TrajectoryTree&, const PackPlan&, const ModelParams<T>&,              \
                                 const RunOptions&);                                                          \
  template GradReport compare_grads(const ParamGrads<T>&, const ParamGrads<T>&, double);                     \
  template double prefix_identity_error(const TrajectoryTree&, const PackPlan&, const ModelParams<T>&,       \
                                        MaskMode);                                                            \
  template VerifyReport verify(const TrajectoryTree&, const PackPlan&, const ModelParams<T>&,                \
                               const VerifyOptions&);

PREFIX_FOREST_INSTANTIATE(float)
PREFIX_FOREST_INSTANTIATE(double)
PREFIX_FOREST_INSTANTIATE(long double)
PREFIX_FOREST_INSTANTIATE(Quad)

#undef PREFIX_FOREST_INSTANTIATE

}  // namespace prefix_forest::refmodel
