#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "moclip/checkpoint.hpp"
#include "moclip/dataset.hpp"
#include "moclip/losses.hpp"
#include "moclip/model.hpp"
#include "moclip/optim.hpp"

namespace moclip {

struct TrainConfig {
  std::size_t total_epochs = 10;
  std::size_t freeze_epochs = 7;
  std::size_t batch_size = 32;
  AdamWConfig optim;
  double lambda_distill = 0.4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool naive_mode = false;
  ModelConfig model;

  void validate() const {
    if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (freeze_epochs > total_epochs) {
      throw ConfigError("freeze_epochs (" + std::to_string(freeze_epochs) + ") exceeds total_epochs (" +
                        std::to_string(total_epochs) + ")");
    }
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!std::isfinite(lambda_distill) || lambda_distill < 0.0) throw ConfigError("lambda_distill must be finite and >= 0");
    if (!(optim.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
      throw ConfigError("betas must lie in [0, 1)");
    }
    if (!(optim.eps > 0.0)) throw ConfigError("eps must be > 0");
    if (optim.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (model.embed_dim < 1 || model.feature_width < 1) throw ConfigError("model widths must be >= 1");
    if (model.heads == 0 || model.feature_width % model.heads != 0) throw ConfigError("heads must divide feature_width");
    if (model.context_length < 2) throw ConfigError("context_length must be >= 2");
  }

  /// Naive baseline: contrastive loss only, no positional encodings, no cross-limb edges.
  ModelConfig effective_model() const {
    ModelConfig m = model;
    if (naive_mode) {
      m.positional_encoding = false;
      m.cross_limb = false;
      m.dense_head = false;
    }
    return m;
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["total_epochs"] = c.total_epochs;
  j["freeze_epochs"] = c.freeze_epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.optim.lr;
  j["beta1"] = c.optim.beta1;
  j["beta2"] = c.optim.beta2;
  j["eps"] = c.optim.eps;
  j["weight_decay"] = c.optim.weight_decay;
  j["lambda_distill"] = c.lambda_distill;
  j["clip_norm"] = c.clip_norm;
  j["seed"] = c.seed;
  j["naive_mode"] = c.naive_mode;
  j["embed_dim"] = c.model.embed_dim;
  j["feature_width"] = c.model.feature_width;
  j["heads"] = c.model.heads;
  j["spatial_layers"] = c.model.spatial_layers;
  j["temporal_layers"] = c.model.temporal_layers;
  j["text_layers"] = c.model.text_layers;
  j["context_length"] = c.model.context_length;
  j["mlp_ratio"] = c.model.mlp_ratio;
  j["positional_encoding"] = c.model.positional_encoding;
  j["cross_limb"] = c.model.cross_limb;
  j["dense_head"] = c.model.dense_head;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.total_epochs = j.at("total_epochs").get<std::size_t>();
    c.freeze_epochs = j.at("freeze_epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.optim.lr = j.at("lr").get<double>();
    c.optim.beta1 = j.at("beta1").get<double>();
    c.optim.beta2 = j.at("beta2").get<double>();
    c.optim.eps = j.at("eps").get<double>();
    c.optim.weight_decay = j.at("weight_decay").get<double>();
    c.lambda_distill = j.at("lambda_distill").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.naive_mode = j.at("naive_mode").get<bool>();
    c.model.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.model.feature_width = j.at("feature_width").get<std::size_t>();
    c.model.heads = j.at("heads").get<std::size_t>();
    c.model.spatial_layers = j.at("spatial_layers").get<std::size_t>();
    c.model.temporal_layers = j.at("temporal_layers").get<std::size_t>();
    c.model.text_layers = j.at("text_layers").get<std::size_t>();
    c.model.context_length = j.at("context_length").get<std::size_t>();
    c.model.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.model.positional_encoding = j.at("positional_encoding").get<bool>();
    c.model.cross_limb = j.at("cross_limb").get<bool>();
    c.model.dense_head = j.at("dense_head").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  int phase = 1;
  double contrastive = 0.0;
  std::optional<double> distill;
  std::optional<double> alignment;
  double total = 0.0;
};

inline nlohmann::ordered_json to_json(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["phase"] = e.phase;
  j["contrastive"] = e.contrastive;
  if (e.distill) j["distill"] = *e.distill;
  if (e.alignment) j["alignment"] = *e.alignment;
  j["total"] = e.total;
  return j;
}

inline EpochLog epoch_log_from_json(const nlohmann::json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.phase = j.at("phase").get<int>();
  e.contrastive = j.at("contrastive").get<double>();
  if (j.contains("distill")) e.distill = j.at("distill").get<double>();
  if (j.contains("alignment")) e.alignment = j.at("alignment").get<double>();
  e.total = j.at("total").get<double>();
  return e;
}

/// Two-phase training: the student text encoder stays frozen for `freeze_epochs`
/// epochs, then all three losses train everything except the teacher.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const std::vector<MotionTextPair>& dataset)
      : cfg_(cfg), model_(init_model(cfg, dataset)), optimizer_(cfg.optim) {
    bind(dataset);
  }

  const TrainConfig& config() const { return cfg_; }
  const MoClipModel& model() const { return model_; }
  MoClipModel& model() { return model_; }
  const AdamW& optimizer() const { return optimizer_; }
  const std::vector<EpochLog>& logs() const { return logs_; }
  std::size_t epochs_done() const { return epoch_; }
  bool finished() const { return epoch_ >= cfg_.total_epochs; }
  std::size_t batches_per_epoch() const { return train_.size() / cfg_.batch_size; }

  /// Runs one epoch and returns its log line.
  EpochLog run_epoch() {
    if (finished()) throw ContractError("training already finished");
    const int phase = epoch_ < cfg_.freeze_epochs ? 1 : 2;
    model_.set_student_trainable(phase == 2);

    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg_.seed, "epoch", epoch_));
    rng.shuffle(order);

    const std::size_t batches = batches_per_epoch();
    LossBreakdown sums;
    ParamList params = model_.params();
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<const MotionSequence*> motions;
      std::vector<std::string> captions;
      for (std::size_t k = 0; k < cfg_.batch_size; ++k) {
        const MotionTextPair* p = train_[order[b * cfg_.batch_size + k]];
        motions.push_back(&p->motion);
        captions.push_back(p->caption);
      }
      const LossBreakdown parts = step(motions, captions, params, epoch_, b);
      sums.contrastive += parts.contrastive;
      sums.distill += parts.distill;
      sums.alignment += parts.alignment;
      sums.total += parts.total;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    EpochLog log;
    log.epoch = epoch_ + 1;
    log.phase = phase;
    log.contrastive = sums.contrastive * inv;
    if (!cfg_.naive_mode) {
      log.distill = sums.distill * inv;
      log.alignment = sums.alignment * inv;
    }
    log.total = sums.total * inv;
    logs_.push_back(log);
    ++epoch_;
    model_.set_student_trainable(false);
    return log;
  }

  /// Runs the remaining epochs, calling `on_epoch` after each one.
  void run(const std::function<void(const EpochLog&)>& on_epoch = {}) {
    while (!finished()) {
      const EpochLog log = run_epoch();
      if (on_epoch) on_epoch(log);
    }
  }

  Checkpoint to_checkpoint() const {
    nlohmann::json meta;
    meta["train"] = to_json(cfg_);
    meta["epoch"] = epoch_;
    meta["vocab"] = model_.vocab.tokens();
    meta["rng"] = {{"scheme", "counter"}, {"seed", cfg_.seed}, {"next_epoch", epoch_}};
    nlohmann::json logs = nlohmann::json::array();
    for (const auto& l : logs_) logs.push_back(nlohmann::json::parse(to_json(l).dump()));
    meta["logs"] = logs;
    Checkpoint ckpt;
    ckpt.config = meta.dump();
    for (const auto& [name, t] : model_.params()) ckpt.add(name, t.shape(), t.values());
    for (const auto& [name, st] : optimizer_.state()) {
      const Shape shape{st.m.size()};
      ckpt.add("optim." + name + ".m", shape, st.m);
      ckpt.add("optim." + name + ".v", shape, st.v);
      const double steps = static_cast<double>(st.step);
      ckpt.add("optim." + name + ".step", Shape{1}, std::span<const double>(&steps, 1));
    }
    return ckpt;
  }

  /// Rebuilds the trainer state stored in `ckpt`; `dataset` supplies the training pairs.
  static Trainer from_checkpoint(const Checkpoint& ckpt, const std::vector<MotionTextPair>& dataset) {
    const auto meta = parse_meta(ckpt);
    Trainer t(train_config_from_json(meta.at("train")), Vocabulary(meta.at("vocab").get<std::vector<std::string>>()));
    t.epoch_ = meta.at("epoch").get<std::size_t>();
    for (const auto& l : meta.at("logs")) t.logs_.push_back(epoch_log_from_json(l));
    load_params(ckpt, t.model_);
    for (const auto& st : ckpt.tensors) {
      const std::string prefix = "optim.";
      const std::string suffix = ".step";
      if (st.name.rfind(prefix, 0) != 0 || st.name.size() < suffix.size() ||
          st.name.compare(st.name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      const std::string name = st.name.substr(prefix.size(), st.name.size() - prefix.size() - suffix.size());
      MomentState ms;
      ms.step = static_cast<std::uint64_t>(st.values.at(0));
      ms.m = ckpt.at("optim." + name + ".m").values;
      ms.v = ckpt.at("optim." + name + ".v").values;
      t.optimizer_.state()[name] = std::move(ms);
    }
    t.bind(dataset);
    return t;
  }

  static nlohmann::json parse_meta(const Checkpoint& ckpt) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(ckpt.config);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    for (const char* key : {"train", "epoch", "vocab", "logs"}) {
      if (!meta.is_object() || !meta.contains(key)) {
        throw FormatError(std::string("checkpoint config lacks '") + key + "'");
      }
    }
    return meta;
  }

  /// Overwrites every model parameter with the checkpoint tensor of the same name.
  static void load_params(const Checkpoint& ckpt, MoClipModel& model) {
    for (auto& [name, t] : model.params()) {
      const StoredTensor& st = ckpt.at(name);
      if (st.values.size() != t.size()) {
        throw FormatError("checkpoint tensor '" + name + "' has " + std::to_string(st.values.size()) +
                          " values, model expects " + shape_str(t.shape()));
      }
      auto dst = t.mutable_values();
      std::copy(st.values.begin(), st.values.end(), dst.begin());
    }
  }

 private:
  Trainer(const TrainConfig& cfg, Vocabulary vocab)
      : cfg_(cfg), model_(cfg.effective_model(), std::move(vocab), cfg.seed), optimizer_(cfg.optim) {
    cfg_.validate();
  }

  static MoClipModel init_model(const TrainConfig& cfg, const std::vector<MotionTextPair>& dataset) {
    cfg.validate();
    std::vector<std::string> captions;
    for (const auto& p : dataset) {
      if (p.split == Split::train) captions.push_back(p.caption);
    }
    if (captions.empty()) throw ConfigError("training split is empty");
    return MoClipModel(cfg.effective_model(), build_vocab(captions), cfg.seed);
  }

  void bind(const std::vector<MotionTextPair>& dataset) {
    train_.clear();
    for (const auto& p : dataset) {
      if (p.split == Split::train) train_.push_back(&p);
    }
    if (train_.empty()) throw ConfigError("training split is empty");
    if (train_.size() < cfg_.batch_size) {
      throw ConfigError("training split has " + std::to_string(train_.size()) + " pairs, fewer than one batch of " +
                        std::to_string(cfg_.batch_size));
    }
    const std::size_t frames = train_.front()->motion.frames;
    for (const auto* p : train_) {
      if (p->motion.frames != frames) throw FormatError("training motions must share one sequence length");
    }
  }

  LossBreakdown step(const std::vector<const MotionSequence*>& motions, const std::vector<std::string>& captions,
                     ParamList& params, std::size_t epoch, std::size_t batch) {
    ComputationTape tape;
    LossBreakdown parts;
    Tensor total;
    {
      TapeScope scope(tape);
      const Tensor z_motion = model_.encode_motions(motions);
      const TextEmbeddings student = model_.encode_student(captions);
      const Tensor con = contrastive_loss(z_motion, student.normalized, model_.head);
      parts.contrastive = con.item();
      if (cfg_.naive_mode) {
        total = con;
        parts.total = parts.contrastive;
      } else {
        TextEmbeddings teacher;
        {
          NoGradScope no_grad;
          teacher = model_.encode_teacher(captions);
        }
        const Tensor dis = distill_loss(student.projected, teacher.projected);
        const Tensor ali = alignment_loss(z_motion, student.normalized);
        total = total_loss(con, dis, ali, LossWeights{cfg_.lambda_distill});
        parts.distill = dis.item();
        parts.alignment = ali.item();
        parts.total = total.item();
      }
    }
    if (!std::isfinite(parts.total)) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch index " +
                           std::to_string(batch) + " (contrastive " + std::to_string(parts.contrastive) +
                           ", distill " + std::to_string(parts.distill) + ", alignment " +
                           std::to_string(parts.alignment) + ")");
    }
    tape.backward(total);
    clip_grad_norm(params, cfg_.clip_norm);
    optimizer_.step(params);
    model_.head.clamp();
    for (auto& [name, t] : params) t.clear_grad();
    return parts;
  }

  TrainConfig cfg_;
  MoClipModel model_;
  AdamW optimizer_;
  std::vector<const MotionTextPair*> train_;
  std::vector<EpochLog> logs_;
  std::size_t epoch_ = 0;
};

/// Model weights and vocabulary from a trainer checkpoint, ready for evaluation.
inline MoClipModel load_model(const Checkpoint& ckpt) {
  const auto meta = Trainer::parse_meta(ckpt);
  const TrainConfig cfg = train_config_from_json(meta.at("train"));
  MoClipModel model(cfg.effective_model(), Vocabulary(meta.at("vocab").get<std::vector<std::string>>()), cfg.seed);
  Trainer::load_params(ckpt, model);
  return model;
}

inline Trainer train(const TrainConfig& cfg, const std::vector<MotionTextPair>& dataset,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
  Trainer t(cfg, dataset);
  t.run(on_epoch);
  return t;
}

}  // namespace moclip
