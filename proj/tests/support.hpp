#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "moclip/moclip.hpp"

namespace moclip::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

struct GradCheck {
  double max_rel = 0.0;  // worst per-input norm-wise relative error
  std::size_t evaluations = 0;
};

/// Compares tape gradients of the scalar `f()` against central differences in every
/// element of `inputs`. Errors are norm-wise per input, |g - g_fd| / max(|g|, |g_fd|, 1e-4·G)
/// where G is the norm of the full gradient.
inline GradCheck check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& x : inputs) x.clear_grad();
  ComputationTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f();
  }
  tape.backward(loss);

  GradCheck out;
  std::vector<std::vector<double>> analytic, numeric;
  double global = 0.0;
  for (auto& x : inputs) {
    std::vector<double> a(x.size(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), a.begin());
    std::vector<double> n(x.size());
    auto v = x.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = f().item();
      v[i] = keep - h;
      const double down = f().item();
      v[i] = keep;
      n[i] = (up - down) / (2.0 * h);
      out.evaluations += 2;
    }
    for (double g : a) global += g * g;
    analytic.push_back(std::move(a));
    numeric.push_back(std::move(n));
  }
  const double floor = 1e-4 * std::sqrt(global);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      diff += (analytic[k][i] - numeric[k][i]) * (analytic[k][i] - numeric[k][i]);
      na += analytic[k][i] * analytic[k][i];
      nn += numeric[k][i] * numeric[k][i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), floor, 1e-12});
    out.max_rel = std::max(out.max_rel, std::sqrt(diff) / denom);
  }
  return out;
}

/// Scalar probe of a tensor-valued op: sum(op * weights) with fixed random weights.
inline Tensor weighted_sum(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

inline DatasetConfig tiny_dataset_config() {
  DatasetConfig c;
  c.classes = {"walk", "jump", "clap", "kick_left"};
  c.samples_per_class = 16;
  c.frames = 8;
  return c;
}

inline ModelConfig tiny_model() {
  ModelConfig m;
  m.embed_dim = 16;
  m.feature_width = 16;
  m.heads = 2;
  m.spatial_layers = 1;
  m.temporal_layers = 1;
  m.text_layers = 1;
  m.context_length = 24;
  return m;
}

inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.total_epochs = 4;
  c.freeze_epochs = 2;
  c.batch_size = 16;
  c.model = tiny_model();
  return c;
}

inline MotionEncoderConfig tiny_motion_config() { return tiny_model().motion(); }

}  // namespace moclip::testing
