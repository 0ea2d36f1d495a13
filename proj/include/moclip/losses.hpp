#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "moclip/nn.hpp"
#include "moclip/ops.hpp"

namespace moclip {

inline const double kInitLogScale = std::log(1.0 / 0.07);
inline const double kMaxLogScale = std::log(100.0);

/// Learnable logit scaling. The effective matrix is exp(log_scale)·W, with W the
/// identity unless the dense mode is enabled (then W is learned, identity-initialised).
struct ContrastiveHead {
  Tensor log_scale = Tensor::scalar(kInitLogScale, true);
  std::optional<Tensor> dense;  // [d×d]

  static ContrastiveHead with_dense(std::size_t d) {
    ContrastiveHead h;
    Tensor w = Tensor::zeros({d, d}, true);
    for (std::size_t i = 0; i < d; ++i) w.mutable_values()[i * d + i] = 1.0;
    h.dense = w;
    return h;
  }

  double scale() const { return std::exp(log_scale.item()); }

  /// Keeps exp(log_scale) <= 100.
  void clamp() {
    double& v = log_scale.mutable_values()[0];
    v = std::min(v, kMaxLogScale);
  }

  void collect(ParamList& params, const std::string& prefix) const {
    params.emplace_back(prefix + ".log_scale", log_scale);
    if (dense) params.emplace_back(prefix + ".dense", *dense);
  }
};

struct LossWeights {
  double lambda_distill = 0.4;

  void validate() const {
    if (!std::isfinite(lambda_distill) || lambda_distill < 0.0) {
      throw ConfigError("lambda_distill must be finite and non-negative, got " + std::to_string(lambda_distill));
    }
  }
};

struct LossBreakdown {
  double contrastive = 0.0;
  double distill = 0.0;
  double alignment = 0.0;
  double total = 0.0;
};

namespace detail {
inline std::vector<std::size_t> identity_targets(std::size_t n) {
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i;
  return y;
}
}  // namespace detail

/// Symmetric cross-entropy over scaled similarity logits, pair i matching pair i:
/// ½[CE(s·Zm W Ztᵀ, y) + CE(s·Zt W Zmᵀ, y)].
inline Tensor contrastive_loss(const Tensor& z_motion, const Tensor& z_text, const ContrastiveHead& head) {
  if (z_motion.rank() != 2 || z_motion.shape() != z_text.shape()) {
    throw DimensionError("contrastive_loss: batch shapes " + shape_str(z_motion.shape()) + " and " +
                         shape_str(z_text.shape()) + " differ");
  }
  const Tensor s = exp(head.log_scale);
  Tensor left_m = head.dense ? matmul(z_motion, *head.dense) : z_motion;
  Tensor left_t = head.dense ? matmul(z_text, *head.dense) : z_text;
  Tensor logits_mt = mul_scalar(matmul(left_m, transpose(z_text)), s);
  Tensor logits_tm = mul_scalar(matmul(left_t, transpose(z_motion)), s);
  const auto y = detail::identity_targets(z_motion.dim(0));
  return scale(add(cross_entropy_rows(logits_mt, y), cross_entropy_rows(logits_tm, y)), 0.5);
}

/// Mean squared L2 distance between student and teacher rows. The teacher must not
/// carry gradient.
inline Tensor distill_loss(const Tensor& student, const Tensor& teacher) {
  if (student.rank() != 2 || student.shape() != teacher.shape()) {
    throw DimensionError("distill_loss: shapes " + shape_str(student.shape()) + " and " +
                         shape_str(teacher.shape()) + " differ");
  }
  if (teacher.requires_grad()) throw ContractError("distill_loss: teacher embeddings must not require gradient");
  const Tensor diff = sub(student, teacher);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(student.dim(0)));
}

/// 1 − mean row-wise cosine similarity.
inline Tensor alignment_loss(const Tensor& z_motion, const Tensor& z_student) {
  if (z_motion.rank() != 2 || z_motion.shape() != z_student.shape()) {
    throw DimensionError("alignment_loss: shapes " + shape_str(z_motion.shape()) + " and " +
                         shape_str(z_student.shape()) + " differ");
  }
  const Tensor cos = cosine_rows(z_motion, z_student);
  return sub(Tensor::scalar(1.0), scale(sum(cos), 1.0 / static_cast<double>(z_motion.dim(0))));
}

/// contrastive + λ·distill + alignment as a differentiable scalar.
inline Tensor total_loss(const Tensor& contrastive, const Tensor& distill, const Tensor& alignment,
                         const LossWeights& weights) {
  weights.validate();
  return add(add(contrastive, scale(distill, weights.lambda_distill)), alignment);
}

inline LossBreakdown total_loss(double contrastive, double distill, double alignment, const LossWeights& weights) {
  weights.validate();
  LossBreakdown b{contrastive, distill, alignment, 0.0};
  b.total = contrastive + weights.lambda_distill * distill + alignment;
  return b;
}

}  // namespace moclip
