#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "moclip/errors.hpp"

namespace moclip {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major f64 array with an optional accumulated gradient.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how the
/// tape refers back to operation inputs and outputs.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    for (std::size_t e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (values.size() != shape_size(shape)) {
      throw DimensionError("value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  /// Mutable access for initialisers and optimizers; never used inside recorded ops.
  std::span<double> mutable_values() { return node_->values; }
  const std::vector<double>& vec() const { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  // Gradient storage is shared handle state, so these are const like shared_ptr access.
  std::span<double> mutable_grad() const {
    ensure_grad();
    return node_->grad;
  }
  void ensure_grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
  void clear_grad() { node_->grad.clear(); }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->values[0];
  }
  double operator[](std::size_t i) const { return node_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->values[r * node_->shape.back() + c]; }

  /// False when any value is NaN or infinite.
  bool valid() const {
    for (double v : node_->values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Independent copy of the values (no gradient, no tape history).
  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), vec(), requires_grad); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const void* id() const { return node_.get(); }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of executed differentiable operations.
class ComputationTape {
 public:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Reverse sweep from a scalar loss. Every requires_grad input on the tape ends up
  /// with an allocated gradient (zero when the loss does not depend on it); gradients
  /// accumulate into whatever the tensors already hold.
  void backward(Tensor loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    bool found = false;
    for (const auto& e : entries_) {
      if (e.output.same_node(loss)) {
        found = true;
        break;
      }
    }
    if (!found) throw ContractError("backward(): loss was not produced on this tape");

    for (auto& e : entries_) {
      for (auto& in : e.inputs) {
        if (in.requires_grad()) in.ensure_grad();
      }
    }
    loss.mutable_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward();
    }
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {
inline thread_local ComputationTape* current_tape = nullptr;
}

/// Makes `tape` the recording target for ops executed on this thread while alive.
class TapeScope {
 public:
  explicit TapeScope(ComputationTape& tape) : previous_(detail::current_tape) {
    detail::current_tape = &tape;
  }
  ~TapeScope() { detail::current_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  ComputationTape* previous_;
};

/// Temporarily disables recording (forward passes used only for evaluation).
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::current_tape) { detail::current_tape = nullptr; }
  ~NoGradScope() { detail::current_tape = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  ComputationTape* previous_;
};

inline ComputationTape* active_tape() { return detail::current_tape; }

inline void backward(const Tensor& loss, ComputationTape& tape) { tape.backward(loss); }

}  // namespace moclip
