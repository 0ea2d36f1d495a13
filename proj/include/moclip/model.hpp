#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moclip/encoders.hpp"
#include "moclip/losses.hpp"
#include "moclip/rng.hpp"
#include "moclip/vocab.hpp"

namespace moclip {

struct ModelConfig {
  std::size_t embed_dim = 64;
  std::size_t feature_width = 64;
  std::size_t heads = 4;
  std::size_t spatial_layers = 2;
  std::size_t temporal_layers = 2;
  std::size_t text_layers = 2;
  std::size_t context_length = 32;
  std::size_t mlp_ratio = 2;
  bool positional_encoding = true;
  bool cross_limb = true;
  bool dense_head = false;

  MotionEncoderConfig motion() const {
    MotionEncoderConfig m;
    m.feature_width = feature_width;
    m.heads = heads;
    m.spatial_layers = spatial_layers;
    m.temporal_layers = temporal_layers;
    m.mlp_ratio = mlp_ratio;
    m.embed_dim = embed_dim;
    m.positional_encoding = positional_encoding;
    m.cross_limb = cross_limb;
    return m;
  }

  TextEncoderConfig text(std::size_t vocab_size) const {
    TextEncoderConfig t;
    t.vocab_size = vocab_size;
    t.context_length = context_length;
    t.width = feature_width;
    t.heads = heads;
    t.layers = text_layers;
    t.mlp_ratio = mlp_ratio;
    t.embed_dim = embed_dim;
    return t;
  }
};

/// Motion encoder, trainable student text encoder, its frozen teacher and the
/// contrastive head. Parameters are created deterministically from (config, vocab, seed).
struct MoClipModel {
  ModelConfig config;
  Vocabulary vocab;
  MotionEncoder motion;
  TextEncoder student;
  TextEncoder teacher;
  ContrastiveHead head;

  MoClipModel(const ModelConfig& cfg, Vocabulary v, std::uint64_t seed) : config(cfg), vocab(std::move(v)) {
    Rng motion_rng(derive_seed(seed, "init.motion"));
    Rng text_rng(derive_seed(seed, "init.text"));
    motion = MotionEncoder(cfg.motion(), toy_skeleton(), motion_rng);
    student = TextEncoder(cfg.text(vocab.size()), text_rng);
    teacher = student.clone_teacher();
    auto tp = teacher.params();
    set_requires_grad(tp, false);
    if (cfg.dense_head) head = ContrastiveHead::with_dense(cfg.embed_dim);
  }

  /// Everything that is checkpointed, with stable names.
  ParamList params() const {
    ParamList p;
    for (auto& [n, t] : motion.params()) p.emplace_back("motion." + n, t);
    for (auto& [n, t] : student.params()) p.emplace_back("student." + n, t);
    for (auto& [n, t] : teacher.params()) p.emplace_back("teacher." + n, t);
    head.collect(p, "head");
    return p;
  }

  ParamList motion_params() const {
    ParamList p;
    for (auto& [n, t] : motion.params()) p.emplace_back("motion." + n, t);
    head.collect(p, "head");
    return p;
  }

  ParamList student_params() const {
    ParamList p;
    for (auto& [n, t] : student.params()) p.emplace_back("student." + n, t);
    return p;
  }

  void set_student_trainable(bool on) { student.set_trainable(on); }

  Tensor encode_motions(const std::vector<const MotionSequence*>& batch) const { return motion.encode(batch); }

  TextEmbeddings encode_student(const std::vector<std::string>& captions) const {
    return student.encode(vocab, captions);
  }

  TextEmbeddings encode_teacher(const std::vector<std::string>& captions) const {
    return teacher.encode(vocab, captions);
  }
};

}  // namespace moclip
