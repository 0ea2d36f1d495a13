#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "moclip/ops.hpp"
#include "moclip/rng.hpp"

namespace moclip {

/// Named handles to learnable tensors; values are shared with the owning module.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_values()) v = rng.normal(0.0, stddev);
  return t;
}

inline Tensor constant_init(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), true);
}

/// Deep copy of every tensor in `src` into `dst`, matched by position.
inline void copy_values(const ParamList& src, ParamList& dst) {
  if (src.size() != dst.size()) throw DimensionError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto from = src[i].second.values();
    auto to = dst[i].second.mutable_values();
    if (from.size() != to.size()) throw DimensionError("copy_values: size mismatch for " + src[i].first);
    std::copy(from.begin(), from.end(), to.begin());
  }
}

inline void set_requires_grad(ParamList& params, bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

struct Linear {
  Tensor weight;  // [in×out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0)
      : weight(normal_init({in, out}, gain / std::sqrt(static_cast<double>(in)), rng)),
        bias(constant_init({out}, 0.0)) {}

  /// Applies to the last axis of x, any leading shape.
  Tensor operator()(const Tensor& x) const {
    const std::size_t in = weight.dim(0), out = weight.dim(1);
    if (x.shape().back() != in) {
      throw DimensionError("linear: input width " + std::to_string(x.shape().back()) + " != " + std::to_string(in));
    }
    Shape out_shape = x.shape();
    out_shape.back() = out;
    Tensor flat = x.rank() == 2 ? x : reshape(x, {x.size() / in, in});
    Tensor y = add_broadcast(matmul(flat, weight), bias);
    return x.rank() == 2 ? y : reshape(y, out_shape);
  }

  void collect(ParamList& params, const std::string& prefix) const {
    params.emplace_back(prefix + ".weight", weight);
    params.emplace_back(prefix + ".bias", bias);
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width) : gain(constant_init({width}, 1.0)), bias(constant_init({width}, 0.0)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void collect(ParamList& params, const std::string& prefix) const {
    params.emplace_back(prefix + ".gain", gain);
    params.emplace_back(prefix + ".bias", bias);
  }
};

/// Attention weights captured per layer during a forward pass, each [(G·H)×L×L].
using AttentionProbe = std::vector<Tensor>;

/// Pre-norm transformer block: masked multi-head self-attention and a GELU MLP,
/// each with a residual connection. Operates on x[G×L×F], attending within each group.
struct TransformerBlock {
  std::size_t heads = 1;
  LayerNorm ln_attn;
  Linear query, key, value, out;
  LayerNorm ln_mlp;
  Linear hidden, project;

  TransformerBlock() = default;
  TransformerBlock(std::size_t width, std::size_t heads_, std::size_t mlp_width, std::size_t depth, Rng& rng)
      : heads(heads_),
        ln_attn(width),
        query(width, width, rng, 0.1),
        key(width, width, rng, 0.1),
        value(width, width, rng),
        out(width, width, rng, 1.0 / std::sqrt(2.0 * static_cast<double>(depth))),
        ln_mlp(width),
        hidden(width, mlp_width, rng),
        project(mlp_width, width, rng, 1.0 / std::sqrt(2.0 * static_cast<double>(depth))) {
    if (heads == 0 || width % heads != 0) {
      throw DimensionError("transformer block: " + std::to_string(heads) + " heads do not divide width " +
                           std::to_string(width));
    }
  }

  Tensor attend(const Tensor& x, const AttentionMask* mask, AttentionProbe* probe) const {
    const std::size_t F = x.dim(2);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(F / heads));
    Tensor q = split_heads(query(x), heads);
    Tensor k = split_heads(key(x), heads);
    Tensor v = split_heads(value(x), heads);
    Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), inv_sqrt);
    if (mask != nullptr) scores = add_mask(scores, *mask);
    Tensor weights = softmax_rows(scores);
    if (probe != nullptr) probe->push_back(weights);
    return out(merge_heads(bmm(weights, v), heads));
  }

  Tensor operator()(const Tensor& x, const AttentionMask* mask, AttentionProbe* probe = nullptr) const {
    Tensor h = add(x, attend(ln_attn(x), mask, probe));
    return add(h, project(gelu(hidden(ln_mlp(h)))));
  }

  void collect(ParamList& params, const std::string& prefix) const {
    ln_attn.collect(params, prefix + ".ln_attn");
    query.collect(params, prefix + ".query");
    key.collect(params, prefix + ".key");
    value.collect(params, prefix + ".value");
    out.collect(params, prefix + ".out");
    ln_mlp.collect(params, prefix + ".ln_mlp");
    hidden.collect(params, prefix + ".mlp_hidden");
    project.collect(params, prefix + ".mlp_out");
  }
};

/// Fixed sinusoidal table [T×F].
inline Tensor sinusoidal_positions(std::size_t frames, std::size_t width) {
  Tensor pe = Tensor::zeros({frames, width});
  auto v = pe.mutable_values();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      v[t * width + i] = (i % 2 == 0) ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
    }
  }
  return pe;
}

}  // namespace moclip
