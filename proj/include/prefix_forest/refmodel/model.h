// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale decoder-only transformer with a hand-written reverse pass.
//
// Row-vector convention: activations are (tokens x features) and a linear
// layer computes y = x W with W stored (in x out). Each layer is
//   h += Attn(RoPE, mask)(RMSNorm(h)) Wo
//   h += SiLU(RMSNorm(h) W1) W2
// followed by a final RMSNorm and an untied output projection.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/refmodel/matrix.h"

namespace prefix_forest::refmodel {

inline constexpr double kRmsNormEps = 1e-6;

struct ModelConfig {
  int vocab = 97;
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 64;
  double rope_base = 10000.0;

  int head_dim() const { return d_model / n_heads; }
  // Throws ShapeMismatch for non-positive sizes, d_model % n_heads != 0 or an
  // odd head dimension.
  void validate() const;
};

template <class T>
struct LayerParams {
  Matrix<T> attn_norm;  // 1 x d_model
  Matrix<T> wq, wk, wv, wo;
  Matrix<T> mlp_norm;   // 1 x d_model
  Matrix<T> w1;         // d_model x d_ff
  Matrix<T> w2;         // d_ff x d_model
};

template <class T>
struct ModelParams {
  ModelConfig config;
  Matrix<T> embedding;  // vocab x d_model
  std::vector<LayerParams<T>> layers;
  Matrix<T> final_norm;  // 1 x d_model
  Matrix<T> output;      // d_model x vocab

  // Calls f(name, matrix) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("embedding"), self.embedding);
    for (size_t i = 0; i < self.layers.size(); ++i) {
      const std::string p = "layers." + std::to_string(i) + ".";
      auto& l = self.layers[i];
      f(p + "attn_norm", l.attn_norm);
      f(p + "wq", l.wq);
      f(p + "wk", l.wk);
      f(p + "wv", l.wv);
      f(p + "wo", l.wo);
      f(p + "mlp_norm", l.mlp_norm);
      f(p + "w1", l.w1);
      f(p + "w2", l.w2);
    }
    f(std::string("final_norm"), self.final_norm);
    f(std::string("output"), self.output);
  }
};

// Gradients share the parameter layout.
template <class T>
using ParamGrads = ModelParams<T>;

template <class T>
ModelParams<T> zero_params(const ModelConfig& config);

// Every entry uniform in [-0.05, 0.05] from a mt19937_64 stream; norm gains
// included. Same (config, seed) gives bitwise-identical parameters.
template <class T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed);

template <class U, class T>
ModelParams<U> cast_params(const ModelParams<T>& params) {
  ModelParams<U> out = zero_params<U>(params.config);
  std::vector<const Matrix<T>*> src;
  params.visit([&](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
  size_t i = 0;
  out.visit([&](const std::string&, Matrix<U>& m) {
    for (size_t k = 0; k < m.data.size(); ++k) m.data[k] = static_cast<U>(src[i]->data[k]);
    ++i;
  });
  return out;
}

enum class MaskMode {
  kSharedPrefix,  // the batch's ancestor mask
  kPlainCausal,   // lower-triangular over the flattened order
};

enum class ScalerMode {
  kLossWeight,          // tree_scale weights each token's cross-entropy
  kScaleFirstGradient,  // unit-weight dlogits, then multiplied by tree_scale
  kDisabled,            // every scale forced to 1
};

struct RunOptions {
  MaskMode mask = MaskMode::kSharedPrefix;
  ScalerMode scaler = ScalerMode::kLossWeight;
};

template <class T>
struct LayerCache {
  Matrix<T> input;
  std::vector<T> attn_rms;
  Matrix<T> attn_in;  // normalized
  Matrix<T> q, k, v;  // after RoPE for q and k
  std::vector<Matrix<T>> probs;  // per head
  Matrix<T> attn_concat;
  Matrix<T> mid;  // residual stream after attention
  std::vector<T> mlp_rms;
  Matrix<T> mlp_in;
  Matrix<T> pre_act;
  Matrix<T> act;
};

template <class T>
struct ForwardResult {
  DenseMask mask;
  std::vector<LayerCache<T>> layers;
  Matrix<T> hidden;  // residual stream after the last layer
  std::vector<T> final_rms;
  Matrix<T> final_in;
  Matrix<T> logits;
  std::vector<T> loss_weight;  // per token; 0 when unsupervised
  T loss = 0;
};

// loss = sum over supervised tokens of loss_weight * CE(logits, label).
// Throws InputError for token ids outside the vocabulary or a supervised
// token without a label.
template <class T>
ForwardResult<T> forward(const ModelParams<T>& params, const PackedBatch& batch, const RunOptions& options = {});

template <class T>
ParamGrads<T> backward(const ModelParams<T>& params, const ForwardResult<T>& fwd, const PackedBatch& batch,
                       const RunOptions& options = {});

}  // namespace prefix_forest::refmodel
