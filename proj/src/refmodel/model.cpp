// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/refmodel/model.h"

#include <random>

#include "prefix_forest/refmodel/attention.h"
#include "prefix_forest/refmodel/scalar.h"

namespace prefix_forest::refmodel {

void ModelConfig::validate() const {
  if (vocab < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1) {
    throw ShapeMismatch("model config: every size must be at least 1");
  }
  if (d_model % n_heads != 0) throw ShapeMismatch("model config: d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) throw ShapeMismatch("model config: head dimension must be even for rotary embeddings");
  if (!(rope_base > 0.0)) throw ShapeMismatch("model config: rope_base must be positive");
}

template <class T>
ModelParams<T> zero_params(const ModelConfig& config) {
  config.validate();
  const auto d = static_cast<size_t>(config.d_model);
  const auto ff = static_cast<size_t>(config.d_ff);
  const auto v = static_cast<size_t>(config.vocab);
  ModelParams<T> p;
  p.config = config;
  p.embedding = Matrix<T>(v, d);
  p.layers.resize(static_cast<size_t>(config.n_layers));
  for (auto& l : p.layers) {
    l.attn_norm = Matrix<T>(1, d);
    l.wq = Matrix<T>(d, d);
    l.wk = Matrix<T>(d, d);
    l.wv = Matrix<T>(d, d);
    l.wo = Matrix<T>(d, d);
    l.mlp_norm = Matrix<T>(1, d);
    l.w1 = Matrix<T>(d, ff);
    l.w2 = Matrix<T>(ff, d);
  }
  p.final_norm = Matrix<T>(1, d);
  p.output = Matrix<T>(d, v);
  return p;
}

template <class T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<T> p = zero_params<T>(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  p.visit([&](const std::string&, Matrix<T>& m) {
    for (auto& x : m.data) x = static_cast<T>(dist(rng));
  });
  return p;
}

namespace {

template <class T>
void rms_norm(const Matrix<T>& x, const Matrix<T>& gain, Matrix<T>& y, std::vector<T>& rms) {
  y = Matrix<T>(x.rows, x.cols);
  rms.assign(x.rows, T(0));
  for (size_t i = 0; i < x.rows; ++i) {
    const T* xi = x.row(i);
    T ss = 0;
    for (size_t c = 0; c < x.cols; ++c) ss += xi[c] * xi[c];
    const T r = scalar::sqrt(ss / static_cast<T>(x.cols) + static_cast<T>(kRmsNormEps));
    rms[i] = r;
    for (size_t c = 0; c < x.cols; ++c) y(i, c) = xi[c] / r * gain.data[c];
  }
}

// Returns dx and accumulates the gain gradient.
template <class T>
Matrix<T> rms_norm_backward(const Matrix<T>& x, const std::vector<T>& rms, const Matrix<T>& gain,
                            const Matrix<T>& dy, Matrix<T>& d_gain) {
  Matrix<T> dx(x.rows, x.cols);
  const auto d = static_cast<T>(x.cols);
  for (size_t i = 0; i < x.rows; ++i) {
    const T r = rms[i];
    const T* xi = x.row(i);
    const T* dyi = dy.row(i);
    T dot = 0;
    for (size_t c = 0; c < x.cols; ++c) {
      d_gain.data[c] += dyi[c] * xi[c] / r;
      dot += gain.data[c] * dyi[c] * xi[c];
    }
    const T coef = dot / (d * r * r * r);
    for (size_t c = 0; c < x.cols; ++c) dx(i, c) = gain.data[c] * dyi[c] / r - xi[c] * coef;
  }
  return dx;
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + scalar::exp(-x));
}

template <class T>
Matrix<T> slice_cols(const Matrix<T>& m, size_t start, size_t count) {
  Matrix<T> out(m.rows, count);
  for (size_t r = 0; r < m.rows; ++r) {
    for (size_t c = 0; c < count; ++c) out(r, c) = m(r, start + c);
  }
  return out;
}

template <class T>
void put_cols(Matrix<T>& dst, const Matrix<T>& src, size_t start) {
  for (size_t r = 0; r < src.rows; ++r) {
    for (size_t c = 0; c < src.cols; ++c) dst(r, start + c) = src(r, c);
  }
}

template <class T>
T token_weight(const PackedBatch& batch, size_t i, const RunOptions& options) {
  if (!batch.supervised_mask[i]) return T(0);
  return options.scaler == ScalerMode::kDisabled ? T(1) : static_cast<T>(batch.tree_scale[i]);
}

}  // namespace

template <class T>
ForwardResult<T> forward(const ModelParams<T>& params, const PackedBatch& batch, const RunOptions& options) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  const size_t n = batch.size();
  require(n > 0, "forward: empty batch");
  const auto d = static_cast<size_t>(cfg.d_model);
  const auto hd = static_cast<size_t>(cfg.head_dim());
  require(params.embedding.rows == static_cast<size_t>(cfg.vocab) && params.embedding.cols == d,
          "forward: embedding shape differs from config");
  require(params.layers.size() == static_cast<size_t>(cfg.n_layers), "forward: layer count differs from config");

  ForwardResult<T> r;
  r.mask = options.mask == MaskMode::kSharedPrefix ? dense_mask(batch) : plain_causal_mask(n);

  Matrix<T> h(n, d);
  for (size_t i = 0; i < n; ++i) {
    const TokenId t = batch.tokens[i];
    if (t < 0 || t >= cfg.vocab) {
      throw InputError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(cfg.vocab));
    }
    for (size_t c = 0; c < d; ++c) h(i, c) = params.embedding(static_cast<size_t>(t), c);
  }

  for (const LayerParams<T>& lp : params.layers) {
    LayerCache<T>& c = r.layers.emplace_back();
    c.input = h;
    rms_norm(h, lp.attn_norm, c.attn_in, c.attn_rms);
    const Matrix<T> q = matmul(c.attn_in, lp.wq);
    const Matrix<T> k = matmul(c.attn_in, lp.wk);
    c.v = matmul(c.attn_in, lp.wv);
    c.q = Matrix<T>(n, d);
    c.k = Matrix<T>(n, d);
    c.attn_concat = Matrix<T>(n, d);
    for (int head = 0; head < cfg.n_heads; ++head) {
      const size_t off = static_cast<size_t>(head) * hd;
      const Matrix<T> qh = rope_apply(slice_cols(q, off, hd), std::span<const Tokens>(batch.position_ids), cfg.rope_base);
      const Matrix<T> kh = rope_apply(slice_cols(k, off, hd), std::span<const Tokens>(batch.position_ids), cfg.rope_base);
      AttentionResult<T> a = attention_forward(qh, kh, slice_cols(c.v, off, hd), r.mask);
      put_cols(c.q, qh, off);
      put_cols(c.k, kh, off);
      put_cols(c.attn_concat, a.out, off);
      c.probs.push_back(std::move(a.probs));
    }
    c.mid = matmul(c.attn_concat, lp.wo);
    add_in_place(c.mid, h);
    rms_norm(c.mid, lp.mlp_norm, c.mlp_in, c.mlp_rms);
    c.pre_act = matmul(c.mlp_in, lp.w1);
    c.act = Matrix<T>(n, c.pre_act.cols);
    for (size_t i = 0; i < c.pre_act.data.size(); ++i) {
      const T u = c.pre_act.data[i];
      c.act.data[i] = u * sigmoid(u);
    }
    h = matmul(c.act, lp.w2);
    add_in_place(h, c.mid);
  }
  r.hidden = h;
  rms_norm(h, params.final_norm, r.final_in, r.final_rms);
  r.logits = matmul(r.final_in, params.output);

  r.loss_weight.assign(n, T(0));
  for (size_t i = 0; i < n; ++i) {
    if (!batch.supervised_mask[i]) continue;
    if (!batch.labels[i]) throw InputError("supervised token " + std::to_string(i) + " has no label");
    const TokenId label = *batch.labels[i];
    if (label < 0 || label >= cfg.vocab) throw InputError("label " + std::to_string(label) + " outside vocabulary");
    const T w = token_weight<T>(batch, i, options);
    r.loss_weight[i] = w;
    const T* z = r.logits.row(i);
    T zmax = z[0];
    for (size_t j = 1; j < r.logits.cols; ++j) zmax = std::max(zmax, z[j]);
    T sum = 0;
    for (size_t j = 0; j < r.logits.cols; ++j) sum += scalar::exp(z[j] - zmax);
    const T ce = scalar::log(sum) + zmax - z[static_cast<size_t>(label)];
    r.loss += w * ce;
  }
  return r;
}

template <class T>
ParamGrads<T> backward(const ModelParams<T>& params, const ForwardResult<T>& fwd, const PackedBatch& batch,
                       const RunOptions& options) {
  const ModelConfig& cfg = params.config;
  const size_t n = batch.size();
  require(fwd.logits.rows == n && fwd.layers.size() == params.layers.size(), "backward: activations differ from batch");
  const auto hd = static_cast<size_t>(cfg.head_dim());
  const std::span<const Tokens> positions(batch.position_ids);
  ParamGrads<T> g = zero_params<T>(cfg);

  // Cross-entropy gradient; this is where the tree-scale enters.
  Matrix<T> dlogits(n, fwd.logits.cols);
  for (size_t i = 0; i < n; ++i) {
    if (!batch.supervised_mask[i]) continue;
    const auto label = static_cast<size_t>(*batch.labels[i]);
    const T* z = fwd.logits.row(i);
    T* dz = dlogits.row(i);
    T zmax = z[0];
    for (size_t j = 1; j < fwd.logits.cols; ++j) zmax = std::max(zmax, z[j]);
    T sum = 0;
    for (size_t j = 0; j < fwd.logits.cols; ++j) sum += scalar::exp(z[j] - zmax);
    if (options.scaler == ScalerMode::kScaleFirstGradient) {
      for (size_t j = 0; j < fwd.logits.cols; ++j) dz[j] = scalar::exp(z[j] - zmax) / sum;
      dz[label] -= T(1);
      const T scale = static_cast<T>(batch.tree_scale[i]);
      for (size_t j = 0; j < fwd.logits.cols; ++j) dz[j] *= scale;
    } else {
      const T w = fwd.loss_weight[i];
      for (size_t j = 0; j < fwd.logits.cols; ++j) dz[j] = w * (scalar::exp(z[j] - zmax) / sum);
      dz[label] -= w;
    }
  }

  matmul_tn_acc(fwd.final_in, dlogits, g.output);
  Matrix<T> dh = rms_norm_backward(fwd.hidden, fwd.final_rms, params.final_norm, matmul_nt(dlogits, params.output),
                                   g.final_norm);

  for (size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams<T>& lp = params.layers[li];
    const LayerCache<T>& c = fwd.layers[li];
    LayerParams<T>& gl = g.layers[li];

    // h_out = mid + SiLU(mlp_in W1) W2
    matmul_tn_acc(c.act, dh, gl.w2);
    Matrix<T> d_pre = matmul_nt(dh, lp.w2);
    for (size_t i = 0; i < d_pre.data.size(); ++i) {
      const T u = c.pre_act.data[i];
      const T s = sigmoid(u);
      d_pre.data[i] *= s * (T(1) + u * (T(1) - s));
    }
    matmul_tn_acc(c.mlp_in, d_pre, gl.w1);
    Matrix<T> d_mid = rms_norm_backward(c.mid, c.mlp_rms, lp.mlp_norm, matmul_nt(d_pre, lp.w1), gl.mlp_norm);
    add_in_place(d_mid, dh);

    // mid = input + Attn(attn_in) Wo
    matmul_tn_acc(c.attn_concat, d_mid, gl.wo);
    const Matrix<T> d_concat = matmul_nt(d_mid, lp.wo);
    Matrix<T> dq(n, c.q.cols), dk(n, c.k.cols), dv(n, c.v.cols);
    for (int head = 0; head < cfg.n_heads; ++head) {
      const size_t off = static_cast<size_t>(head) * hd;
      const AttentionGrads<T> ag =
          attention_backward(slice_cols(c.q, off, hd), slice_cols(c.k, off, hd), slice_cols(c.v, off, hd),
                             c.probs[static_cast<size_t>(head)], slice_cols(d_concat, off, hd), fwd.mask);
      put_cols(dq, rope_backward(ag.dq, positions, cfg.rope_base), off);
      put_cols(dk, rope_backward(ag.dk, positions, cfg.rope_base), off);
      put_cols(dv, ag.dv, off);
    }
    matmul_tn_acc(c.attn_in, dq, gl.wq);
    matmul_tn_acc(c.attn_in, dk, gl.wk);
    matmul_tn_acc(c.attn_in, dv, gl.wv);
    Matrix<T> d_attn_in = matmul_nt(dq, lp.wq);
    add_in_place(d_attn_in, matmul_nt(dk, lp.wk));
    add_in_place(d_attn_in, matmul_nt(dv, lp.wv));
    dh = rms_norm_backward(c.input, c.attn_rms, lp.attn_norm, d_attn_in, gl.attn_norm);
    add_in_place(dh, d_mid);
  }

  for (size_t i = 0; i < n; ++i) {
    T* row = g.embedding.row(static_cast<size_t>(batch.tokens[i]));
    for (size_t c = 0; c < dh.cols; ++c) row[c] += dh(i, c);
  }
  return g;
}

#define PREFIX_FOREST_INSTANTIATE(T)                                                                       \
  template ModelParams<T> zero_params<T>(const ModelConfig&);                                              \
  template ModelParams<T> init_model<T>(const ModelConfig&, std::uint64_t);                                \
  template ForwardResult<T> forward(const ModelParams<T>&, const PackedBatch&, const RunOptions&);         \
  template ParamGrads<T> backward(const ModelParams<T>&, const ForwardResult<T>&, const PackedBatch&,      \
                                  const RunOptions&);

PREFIX_FOREST_INSTANTIATE(float)
PREFIX_FOREST_INSTANTIATE(double)
PREFIX_FOREST_INSTANTIATE(long double)
PREFIX_FOREST_INSTANTIATE(Quad)

#undef PREFIX_FOREST_INSTANTIATE

}  // namespace prefix_forest::refmodel
