#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moclip/nn.hpp"

namespace moclip {

struct AdamWConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// AdamW with decoupled weight decay and per-parameter bias correction.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::map<std::string, MomentState>& state() { return state_; }
  const std::map<std::string, MomentState>& state() const { return state_; }

  /// Updates every parameter that requires grad; a missing gradient counts as zero.
  void step(ParamList& params) {
    for (auto& [name, p] : params) {
      if (!p.requires_grad()) continue;
      auto values = p.mutable_values();
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(values.size(), 0.0);
        st.v.assign(values.size(), 0.0);
      }
      if (st.m.size() != values.size()) {
        throw DimensionError("adamw: state for '" + name + "' has " + std::to_string(st.m.size()) +
                             " entries, parameter has " + std::to_string(values.size()));
      }
      ++st.step;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.step));
      const bool has = p.has_grad();
      auto g = p.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double gi = has ? g[i] : 0.0;
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double m_hat = st.m[i] / c1;
        const double v_hat = st.v[i] / c2;
        values[i] -= cfg_.lr * cfg_.weight_decay * values[i];
        values[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::map<std::string, MomentState> state_;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
inline double clip_grad_norm(ParamList& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& [name, p] : params) {
      if (!p.requires_grad() || !p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace moclip
