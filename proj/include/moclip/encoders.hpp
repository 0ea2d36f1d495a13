#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moclip/motion.hpp"
#include "moclip/nn.hpp"
#include "moclip/skeleton.hpp"
#include "moclip/vocab.hpp"

namespace moclip {

/// Rows of unit-norm embeddings with the role they play in the losses.
enum class EmbeddingRole { motion, text_student, text_teacher };

struct MotionEncoderConfig {
  std::size_t feature_width = 64;
  std::size_t heads = 4;
  std::size_t spatial_layers = 2;
  std::size_t temporal_layers = 2;
  std::size_t mlp_ratio = 2;
  std::size_t embed_dim = 64;
  bool positional_encoding = true;
  bool cross_limb = true;
};

/// Skeleton-aware motion encoder.
///
/// Each joint coordinate triple is lifted to `feature_width` and tagged with a learned
/// joint-id embedding; spatial transformer blocks attend across joints within a frame,
/// restricted to the skeleton attention mask. The joint features of each frame are
/// flattened and projected to one frame token, temporal blocks attend across frames
/// (optionally with sinusoidal positions), and the result is mean-pooled over time,
/// projected to the shared space and L2-normalised.
class MotionEncoder {
 public:
  MotionEncoder() = default;

  MotionEncoder(const MotionEncoderConfig& cfg, const Skeleton& skeleton, Rng& rng)
      : cfg_(cfg), skeleton_(skeleton) {
    const std::size_t J = skeleton.joint_count();
    const std::size_t F = cfg.feature_width;
    const std::size_t mlp = cfg.mlp_ratio * F;
    lift_ = Linear(3, F, rng);
    joint_embedding_ = normal_init({J, F}, 0.5, rng);
    for (std::size_t i = 0; i < cfg.spatial_layers; ++i) spatial_.emplace_back(F, cfg.heads, mlp, cfg.spatial_layers, rng);
    ln_spatial_ = LayerNorm(F);
    frame_ = Linear(J * F, F, rng);
    for (std::size_t i = 0; i < cfg.temporal_layers; ++i) temporal_.emplace_back(F, cfg.heads, mlp, cfg.temporal_layers, rng);
    ln_final_ = LayerNorm(F);
    projection_ = Linear(F, cfg.embed_dim, rng);
  }

  const MotionEncoderConfig& config() const { return cfg_; }
  const Skeleton& skeleton() const { return *skeleton_; }
  void set_positional_encoding(bool on) { cfg_.positional_encoding = on; }
  void set_cross_limb(bool on) { cfg_.cross_limb = on; }

  /// Unit-norm embeddings [B×d] for a batch of equally long motions.
  Tensor encode(const std::vector<const MotionSequence*>& batch, AttentionProbe* spatial_probe = nullptr,
                AttentionProbe* temporal_probe = nullptr) const {
    return l2_normalize_rows(project(batch, spatial_probe, temporal_probe));
  }

  Tensor encode(const MotionSequence& m) const { return encode(std::vector<const MotionSequence*>{&m}); }

  /// Pre-normalisation projection [B×d].
  Tensor project(const std::vector<const MotionSequence*>& batch, AttentionProbe* spatial_probe = nullptr,
                 AttentionProbe* temporal_probe = nullptr) const {
    if (batch.empty()) throw DimensionError("motion encoder: empty batch");
    const std::size_t J = skeleton_->joint_count();
    const std::size_t T = batch.front()->frames;
    const std::size_t B = batch.size();
    const std::size_t F = cfg_.feature_width;
    std::vector<double> coords;
    coords.reserve(B * T * J * 3);
    for (const MotionSequence* m : batch) {
      if (m->joints != J) {
        throw DimensionError("motion encoder: sequence has " + std::to_string(m->joints) + " joints, skeleton '" +
                             skeleton_->name() + "' has " + std::to_string(J));
      }
      if (m->frames != T) {
        throw DimensionError("motion encoder: batch mixes sequence lengths " + std::to_string(T) + " and " +
                             std::to_string(m->frames));
      }
      coords.insert(coords.end(), m->positions.begin(), m->positions.end());
    }
    Tensor x(Shape{B * T * J, 3}, std::move(coords));

    const AttentionMask mask = attention_mask(*skeleton_, cfg_.cross_limb);
    Tensor h = reshape(lift_(x), {B * T, J, F});
    h = add_broadcast(h, joint_embedding_);
    for (const auto& block : spatial_) h = block(h, &mask, spatial_probe);
    h = ln_spatial_(h);

    Tensor frames = frame_(reshape(h, {B * T, J * F}));
    Tensor seq = reshape(frames, {B, T, F});
    if (cfg_.positional_encoding) seq = add_broadcast(seq, sinusoidal_positions(T, F));
    for (const auto& block : temporal_) seq = block(seq, nullptr, temporal_probe);
    seq = ln_final_(seq);
    return projection_(mean_axis1(seq));
  }

  ParamList params() const {
    ParamList p;
    lift_.collect(p, "lift");
    p.emplace_back("joint_embedding", joint_embedding_);
    for (std::size_t i = 0; i < spatial_.size(); ++i) spatial_[i].collect(p, "spatial" + std::to_string(i));
    ln_spatial_.collect(p, "ln_spatial");
    frame_.collect(p, "frame");
    for (std::size_t i = 0; i < temporal_.size(); ++i) temporal_[i].collect(p, "temporal" + std::to_string(i));
    ln_final_.collect(p, "ln_final");
    projection_.collect(p, "projection");
    return p;
  }

 private:
  MotionEncoderConfig cfg_;
  std::optional<Skeleton> skeleton_;
  Linear lift_;
  Tensor joint_embedding_;
  std::vector<TransformerBlock> spatial_;
  LayerNorm ln_spatial_;
  Linear frame_;
  std::vector<TransformerBlock> temporal_;
  LayerNorm ln_final_;
  Linear projection_;
};

struct TextEncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t context_length = 32;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t mlp_ratio = 2;
  std::size_t embed_dim = 64;
};

struct TextEmbeddings {
  Tensor projected;   // [B×d] before normalisation (distillation target)
  Tensor normalized;  // [B×d] unit rows
};

/// Causal transformer over word tokens with end-token pooling.
class TextEncoder {
 public:
  TextEncoder() = default;

  TextEncoder(const TextEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.vocab_size < 4) throw ConfigError("text encoder: vocabulary too small");
    token_embedding_ = normal_init({cfg.vocab_size, cfg.width}, 0.02, rng);
    position_embedding_ = normal_init({cfg.context_length, cfg.width}, 0.01, rng);
    for (std::size_t i = 0; i < cfg.layers; ++i) blocks_.emplace_back(cfg.width, cfg.heads, cfg.mlp_ratio * cfg.width, cfg.layers, rng);
    ln_final_ = LayerNorm(cfg.width);
    projection_ = normal_init({cfg.width, cfg.embed_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.width)), rng);
  }

  const TextEncoderConfig& config() const { return cfg_; }
  bool frozen() const { return frozen_; }

  /// Marks the encoder trainable or not; a frozen clone stays frozen.
  void set_trainable(bool on) {
    if (frozen_ && on) throw ContractError("a frozen text encoder cannot be made trainable");
    auto p = params();
    set_requires_grad(p, on);
  }

  /// `tokens` are BOS/EOS framed id lists of at most context_length ids.
  TextEmbeddings encode(const std::vector<std::vector<std::size_t>>& tokens, AttentionProbe* probe = nullptr) const {
    if (tokens.empty()) throw DimensionError("text encoder: empty batch");
    const std::size_t B = tokens.size();
    std::size_t L = 0;
    for (const auto& t : tokens) {
      if (t.empty() || t.size() > cfg_.context_length) {
        throw DimensionError("text encoder: token list of length " + std::to_string(t.size()) +
                             " outside [1, " + std::to_string(cfg_.context_length) + "]");
      }
      L = std::max(L, t.size());
    }
    std::vector<std::size_t> flat(B * L, Vocabulary::kPad);
    std::vector<std::size_t> eos_rows(B);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < tokens[b].size(); ++i) {
        if (tokens[b][i] >= cfg_.vocab_size) throw IndexError("text encoder: token id out of vocabulary");
        flat[b * L + i] = tokens[b][i];
      }
      eos_rows[b] = b * L + tokens[b].size() - 1;
    }
    std::vector<std::size_t> positions(L);
    for (std::size_t i = 0; i < L; ++i) positions[i] = i;

    const std::size_t F = cfg_.width;
    Tensor h = reshape(embedding(token_embedding_, flat), {B, L, F});
    h = add_broadcast(h, gather_rows(position_embedding_, positions));
    const AttentionMask causal = AttentionMask::causal(L);
    for (const auto& block : blocks_) h = block(h, &causal, probe);
    h = ln_final_(h);
    Tensor pooled = gather_rows(reshape(h, {B * L, F}), eos_rows);
    TextEmbeddings out;
    out.projected = matmul(pooled, projection_);
    out.normalized = l2_normalize_rows(out.projected);
    return out;
  }

  TextEmbeddings encode(const Vocabulary& vocab, const std::vector<std::string>& captions) const {
    std::vector<std::vector<std::size_t>> tokens;
    tokens.reserve(captions.size());
    for (const auto& c : captions) tokens.push_back(vocab.encode(c, cfg_.context_length));
    return encode(tokens);
  }

  ParamList params() const {
    ParamList p;
    p.emplace_back("token_embedding", token_embedding_);
    p.emplace_back("position_embedding", position_embedding_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(p, "block" + std::to_string(i));
    ln_final_.collect(p, "ln_final");
    p.emplace_back("projection", projection_);
    return p;
  }

  /// Deep copy with fresh storage, permanently frozen.
  TextEncoder clone_teacher() const {
    TextEncoder copy;
    copy.cfg_ = cfg_;
    copy.token_embedding_ = token_embedding_.clone();
    copy.position_embedding_ = position_embedding_.clone();
    for (const auto& b : blocks_) copy.blocks_.push_back(deep_copy(b));
    copy.ln_final_ = LayerNorm(cfg_.width);
    copy.ln_final_.gain = ln_final_.gain.clone();
    copy.ln_final_.bias = ln_final_.bias.clone();
    copy.projection_ = projection_.clone();
    copy.frozen_ = true;
    return copy;
  }

 private:
  static Linear deep_copy(const Linear& l) {
    Linear c;
    c.weight = l.weight.clone();
    c.bias = l.bias.clone();
    return c;
  }
  static LayerNorm deep_copy(const LayerNorm& l) {
    LayerNorm c;
    c.gain = l.gain.clone();
    c.bias = l.bias.clone();
    return c;
  }
  static TransformerBlock deep_copy(const TransformerBlock& b) {
    TransformerBlock c;
    c.heads = b.heads;
    c.ln_attn = deep_copy(b.ln_attn);
    c.query = deep_copy(b.query);
    c.key = deep_copy(b.key);
    c.value = deep_copy(b.value);
    c.out = deep_copy(b.out);
    c.ln_mlp = deep_copy(b.ln_mlp);
    c.hidden = deep_copy(b.hidden);
    c.project = deep_copy(b.project);
    return c;
  }

  TextEncoderConfig cfg_;
  bool frozen_ = false;
  Tensor token_embedding_;
  Tensor position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_final_;
  Tensor projection_;
};

inline TextEncoder clone_teacher(const TextEncoder& student) { return student.clone_teacher(); }

}  // namespace moclip
