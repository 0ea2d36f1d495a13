#pragma once

// Differentiable kernels. Every op computes its forward result eagerly and, when a
// tape is active and some input requires a gradient, records a closure that
// accumulates into the inputs' gradients during the reverse sweep.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "moclip/errors.hpp"
#include "moclip/tensor.hpp"

namespace moclip {

inline constexpr double kMaskFill = -1e9;

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline bool needs_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename Fn>
void record(std::vector<Tensor> inputs, Tensor& out, Fn&& fn) {
  out.set_requires_grad(true);
  active_tape()->record(std::move(inputs), out, std::forward<Fn>(fn));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

// C[g] (+)= op(A[g]) * op(B[g]) for row-major blocks.
inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  const auto rows_a = static_cast<Eigen::Index>(trans_a ? k : m);
  const auto cols_a = static_cast<Eigen::Index>(trans_a ? m : k);
  const auto rows_b = static_cast<Eigen::Index>(trans_b ? n : k);
  const auto cols_b = static_cast<Eigen::Index>(trans_b ? k : n);
  ConstMap A(a, rows_a, cols_a);
  ConstMap B(b, rows_b, cols_b);
  MutMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += A * B;
  } else if (!trans_a && trans_b) {
    C.noalias() += A * B.transpose();
  } else if (trans_a && !trans_b) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// C = A·B for A[m×k], B[k×n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  detail::gemm(a.values().data(), b.values().data(), out.mutable_values().data(), m, k, n, false,
               false, false);
  if (detail::needs_record({&a, &b})) {
    detail::record({a, b}, out, [a, b, out, m, k, n]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad()) {
        detail::gemm(dc, b.values().data(), a.mutable_grad().data(), m, n, k, false, true, true);
      }
      if (b.requires_grad()) {
        detail::gemm(a.values().data(), dc, b.mutable_grad().data(), k, m, n, true, false, true);
      }
    });
  }
  return out;
}

/// Batched product over the leading axis: A[g×m×k]·B[g×k×n], or A·Bᵀ with B[g×n×k].
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  Tensor out = Tensor::zeros({g, m, n});
  {
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* pc = out.mutable_values().data();
    for (std::size_t i = 0; i < g; ++i) {
      detail::gemm(pa + i * m * k, pb + i * k * n, pc + i * m * n, m, k, n, false, transpose_b,
                   false);
    }
  }
  if (detail::needs_record({&a, &b})) {
    detail::record({a, b}, out, [a, b, out, g, m, k, n, transpose_b]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad()) {
        double* da = a.mutable_grad().data();
        const double* pb = b.values().data();
        for (std::size_t i = 0; i < g; ++i) {
          // dA = dC·Bᵀ (B stored k×n) or dC·B (B stored n×k)
          detail::gemm(dc + i * m * n, pb + i * k * n, da + i * m * k, m, n, k, false, !transpose_b,
                       true);
        }
      }
      if (b.requires_grad()) {
        double* db = b.mutable_grad().data();
        const double* pa = a.values().data();
        for (std::size_t i = 0; i < g; ++i) {
          if (transpose_b) {
            // B[n×k]: dB = dCᵀ·A
            detail::gemm(dc + i * m * n, pa + i * m * k, db + i * k * n, n, m, k, true, false, true);
          } else {
            detail::gemm(pa + i * m * k, dc + i * m * n, db + i * k * n, k, m, n, true, false, true);
          }
        }
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  {
    auto o = out.mutable_values();
    auto v = a.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[j * m + i] = v[i * n + j];
  }
  if (detail::needs_record({&a})) {
    detail::record({a}, out, [a, out, m, n]() mutable {
      auto g = a.mutable_grad();
      auto dc = out.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dc[j * m + i];
    });
  }
  return out;
}

/// Same values under a new shape of equal size.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), a.vec());
  if (detail::needs_record({&a})) {
    detail::record({a}, out, [a, out]() mutable {
      auto g = a.mutable_grad();
      auto dc = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, BwdA da, BwdB db) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  {
    auto o = out.mutable_values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i], y[i]);
  }
  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b, out, da, db]() mutable {
      auto dc = out.grad();
      auto x = a.values();
      auto y = b.values();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * da(x[i], y[i]);
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * db(x[i], y[i]);
      }
    });
  }
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfdx) {
  Tensor out = Tensor::zeros(a.shape());
  {
    auto o = out.mutable_values();
    auto x = a.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i]);
  }
  if (needs_record({&a})) {
    record({a}, out, [a, out, dfdx]() mutable {
      auto dc = out.grad();
      auto x = a.values();
      auto y = out.values();
      auto g = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * dfdx(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary_op(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// GELU, tanh approximation.
inline Tensor gelu(const Tensor& a) {
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double c = 0.044715;
  using Arr = Eigen::Array<double, Eigen::Dynamic, 1>;
  const Eigen::Map<const Arr> x(a.values().data(), static_cast<Eigen::Index>(a.size()));
  const Arr u = k * (x + c * x.cube());
  auto t = std::make_shared<Arr>(1.0 - 2.0 / ((2.0 * u).exp() + 1.0));
  Tensor out(a.shape(), std::vector<double>(a.size()));
  Eigen::Map<Arr>(out.mutable_values().data(), x.size()) = 0.5 * x * (1.0 + *t);
  if (detail::needs_record({&a})) {
    detail::record({a}, out, [a, out, t]() mutable {
      const Eigen::Map<const Arr> xv(a.values().data(), t->size());
      const Eigen::Map<const Arr> dc(out.grad().data(), t->size());
      Eigen::Map<Arr> g(a.mutable_grad().data(), t->size());
      const Arr du = k * (1.0 + 3.0 * c * xv.square());
      g += dc * (0.5 * (1.0 + *t) + 0.5 * xv * (1.0 - t->square()) * du);
    });
  }
  return out;
}

/// x + y where y's shape equals the trailing axes of x (bias rows, positional tables).
inline Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw DimensionError("add_broadcast: " + shape_str(ys) + " is not a suffix of " + shape_str(xs));
  }
  const std::size_t inner = y.size();
  const std::size_t outer = x.size() / inner;
  Tensor out = Tensor::zeros(xs);
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t r = 0; r < outer; ++r)
      for (std::size_t i = 0; i < inner; ++i) o[r * inner + i] = xv[r * inner + i] + yv[i];
  }
  if (detail::needs_record({&x, &y})) {
    detail::record({x, y}, out, [x, y, out, inner, outer]() mutable {
      auto dc = out.grad();
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
      if (y.requires_grad()) {
        auto g = y.mutable_grad();
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t i = 0; i < inner; ++i) g[i] += dc[r * inner + i];
      }
    });
  }
  return out;
}

/// x·s for a one-element tensor s (e.g. an exponentiated logit scale).
inline Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: scale must have one element, got " + shape_str(s.shape()));
  const double sv = s[0];
  Tensor out = Tensor::zeros(x.shape());
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * sv;
  }
  if (detail::needs_record({&x, &s})) {
    detail::record({x, s}, out, [x, s, out, sv]() mutable {
      auto dc = out.grad();
      auto xv = x.values();
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * sv;
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dc.size(); ++i) acc += dc[i] * xv[i];
        s.mutable_grad()[0] += acc;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (detail::needs_record({&a})) {
    detail::record({a}, out, [a, out]() mutable {
      const double d = out.grad()[0];
      auto g = a.mutable_grad();
      for (double& v : g) v += d;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Mean over the middle axis: [A×B×C] -> [A×C].
inline Tensor mean_axis1(const Tensor& x) {
  detail::require_rank(x, 3, "mean_axis1");
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2);
  const double inv = 1.0 / static_cast<double>(B);
  Tensor out = Tensor::zeros({A, C});
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) o[a * C + c] += xv[(a * B + b) * C + c];
      for (std::size_t c = 0; c < C; ++c) o[a * C + c] *= inv;
    }
  }
  if (detail::needs_record({&x})) {
    detail::record({x}, out, [x, out, A, B, C, inv]() mutable {
      auto dc = out.grad();
      auto g = x.mutable_grad();
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) g[(a * B + b) * C + c] += dc[a * C + c] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

/// Concatenate along the leading axis; trailing extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat: trailing shape mismatch " + shape_str(shape) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> vals;
  vals.reserve(shape_size(shape));
  bool any_grad = false;
  for (const auto& p : parts) {
    vals.insert(vals.end(), p.values().begin(), p.values().end());
    any_grad = any_grad || p.requires_grad();
  }
  Tensor out(shape, std::move(vals));
  if (active_tape() != nullptr && any_grad) {
    detail::record(parts, out, [parts, out]() mutable {
      auto dc = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

/// Rows of table[V×F] at `rows` -> [len×F]. Serves both embedding lookup and row selection.
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& rows) {
  detail::require_rank(table, 2, "gather_rows");
  const std::size_t V = table.dim(0), F = table.dim(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  for (std::size_t r : rows) {
    if (r >= V) throw IndexError("gather_rows: index " + std::to_string(r) + " out of range [0, " + std::to_string(V) + ")");
  }
  Tensor out = Tensor::zeros({rows.size(), F});
  {
    auto o = out.mutable_values();
    auto t = table.values();
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(rows[i] * F), F,
                  o.begin() + static_cast<std::ptrdiff_t>(i * F));
  }
  if (detail::needs_record({&table})) {
    detail::record({table}, out, [table, out, rows, F]() mutable {
      auto dc = out.grad();
      auto g = table.mutable_grad();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t f = 0; f < F; ++f) g[rows[i] * F + f] += dc[i * F + f];
    });
  }
  return out;
}

inline Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
  return gather_rows(table, ids);
}

/// [G×L×(H·dh)] -> [(G·H)×L×dh]
inline Tensor split_heads(const Tensor& x, std::size_t heads) {
  detail::require_rank(x, 3, "split_heads");
  const std::size_t G = x.dim(0), L = x.dim(1), F = x.dim(2);
  if (heads == 0 || F % heads != 0) {
    throw DimensionError("split_heads: " + std::to_string(heads) + " heads do not divide width " + std::to_string(F));
  }
  const std::size_t dh = F / heads;
  Tensor out = Tensor::zeros({G * heads, L, dh});
  auto index = [=](std::size_t g, std::size_t l, std::size_t h, std::size_t d) {
    return std::pair{(g * L + l) * F + h * dh + d, ((g * heads + h) * L + l) * dh + d};
  };
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t d = 0; d < dh; ++d) {
            auto [src, dst] = index(g, l, h, d);
            o[dst] = xv[src];
          }
  }
  if (detail::needs_record({&x})) {
    detail::record({x}, out, [x, out, G, L, heads, dh, index]() mutable {
      auto dc = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t d = 0; d < dh; ++d) {
              auto [src, dst] = index(g, l, h, d);
              gx[src] += dc[dst];
            }
    });
  }
  return out;
}

/// Inverse of split_heads: [(G·H)×L×dh] -> [G×L×(H·dh)]
inline Tensor merge_heads(const Tensor& x, std::size_t heads) {
  detail::require_rank(x, 3, "merge_heads");
  if (heads == 0 || x.dim(0) % heads != 0) {
    throw DimensionError("merge_heads: leading extent " + std::to_string(x.dim(0)) +
                         " not divisible by " + std::to_string(heads));
  }
  const std::size_t G = x.dim(0) / heads, L = x.dim(1), dh = x.dim(2), F = heads * dh;
  Tensor out = Tensor::zeros({G, L, F});
  auto index = [=](std::size_t g, std::size_t l, std::size_t h, std::size_t d) {
    return std::pair{((g * heads + h) * L + l) * dh + d, (g * L + l) * F + h * dh + d};
  };
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t d = 0; d < dh; ++d) {
            auto [src, dst] = index(g, l, h, d);
            o[dst] = xv[src];
          }
  }
  if (detail::needs_record({&x})) {
    detail::record({x}, out, [x, out, G, L, heads, dh, index]() mutable {
      auto dc = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t l = 0; l < L; ++l)
            for (std::size_t d = 0; d < dh; ++d) {
              auto [src, dst] = index(g, l, h, d);
              gx[src] += dc[dst];
            }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalisation and attention pieces

/// Softmax over the last axis, with per-row max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = xv.data() + r * n;
      double* dst = o.data() + r * n;
      const double mx = *std::max_element(row, row + n);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        dst[j] = std::exp(row[j] - mx);
        s += dst[j];
      }
      for (std::size_t j = 0; j < n; ++j) dst[j] /= s;
    }
  }
  if (detail::needs_record({&x})) {
    detail::record({x}, out, [x, out, n, rows]() mutable {
      auto y = out.values();
      auto dy = out.grad();
      auto g = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[r * n + j] * y[r * n + j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[r * n + j] * (dy[r * n + j] - dot);
      }
    });
  }
  return out;
}

/// Boolean L×L attention mask, row-major (true = attention allowed).
struct AttentionMask {
  std::size_t size = 0;
  std::vector<bool> allowed;

  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * size + j]; }

  static AttentionMask full(std::size_t n) { return {n, std::vector<bool>(n * n, true)}; }
  static AttentionMask causal(std::size_t n) {
    AttentionMask m{n, std::vector<bool>(n * n, false)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = true;
    return m;
  }
};

/// Adds `fill` to every score [G×L×L] whose (query, key) pair is disallowed by the mask.
inline Tensor add_mask(const Tensor& scores, const AttentionMask& mask, double fill = kMaskFill) {
  detail::require_rank(scores, 3, "add_mask");
  const std::size_t L = scores.dim(1);
  if (scores.dim(2) != L || mask.size != L) {
    throw DimensionError("add_mask: scores " + shape_str(scores.shape()) + " vs mask of size " +
                         std::to_string(mask.size));
  }
  Tensor out = scores.clone();
  {
    auto o = out.mutable_values();
    const std::size_t G = scores.dim(0);
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j)
          if (!mask(i, j)) o[(g * L + i) * L + j] += fill;
  }
  if (detail::needs_record({&scores})) {
    detail::record({scores}, out, [scores, out]() mutable {
      auto dc = out.grad();
      auto g = scores.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
    });
  }
  return out;
}

/// Layer normalisation over the last axis with learned gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const std::size_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias of size " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()) + " for width " + std::to_string(n));
  }
  const std::size_t rows = x.size() / n;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = xv.data() + r * n;
      double mu = 0.0;
      for (std::size_t j = 0; j < n; ++j) mu += row[j];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<double>(n);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[r] = is;
      for (std::size_t j = 0; j < n; ++j) {
        const double h = (row[j] - mu) * is;
        xhat[r * n + j] = h;
        o[r * n + j] = h * gv[j] + bv[j];
      }
    }
  }
  if (detail::needs_record({&x, &gain, &bias})) {
    detail::record({x, gain, bias}, out,
                   [x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std), n, rows]() mutable {
                     auto dy = out.grad();
                     auto gv = gain.values();
                     if (gain.requires_grad()) {
                       auto gg = gain.mutable_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < n; ++j) gg[j] += dy[r * n + j] * xhat[r * n + j];
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < n; ++j) gb[j] += dy[r * n + j];
                     }
                     if (x.requires_grad()) {
                       auto gx = x.mutable_grad();
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = dy[r * n + j] * gv[j];
                           s1 += dh;
                           s2 += dh * xhat[r * n + j];
                         }
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = dy[r * n + j] * gv[j];
                           gx[r * n + j] += inv_std[r] * (dh - inv_n * s1 - xhat[r * n + j] * inv_n * s2);
                         }
                       }
                     }
                   });
  }
  return out;
}

/// Divides each row of x[N×d] by its L2 norm. Rows with norm <= eps are rejected.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
  detail::require_rank(x, 2, "l2_normalize_rows");
  const std::size_t N = x.dim(0), d = x.dim(1);
  std::vector<double> norms(N);
  Tensor out = Tensor::zeros(x.shape());
  {
    auto o = out.mutable_values();
    auto xv = x.values();
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += xv[i * d + j] * xv[i * d + j];
      const double nrm = std::sqrt(s);
      if (std::isfinite(nrm) && nrm <= eps) {
        throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) +
                                   " has near-zero norm");
      }
      norms[i] = nrm;
      for (std::size_t j = 0; j < d; ++j) o[i * d + j] = xv[i * d + j] / nrm;
    }
  }
  if (detail::needs_record({&x})) {
    detail::record({x}, out, [x, out, norms = std::move(norms), N, d]() mutable {
      auto y = out.values();
      auto dy = out.grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < N; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += dy[i * d + j] * y[i * d + j];
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += (dy[i * d + j] - y[i * d + j] * dot) / norms[i];
      }
    });
  }
  return out;
}

/// Row-wise cosine similarity of a[N×d] and b[N×d] -> [N], using the explicit norm quotient.
inline Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "cosine_rows");
  detail::require_rank(a, 2, "cosine_rows");
  const std::size_t N = a.dim(0), d = a.dim(1);
  std::vector<double> na(N), nb(N), dots(N);
  Tensor out = Tensor::zeros({N});
  {
    auto o = out.mutable_values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < N; ++i) {
      double saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        saa += av[i * d + j] * av[i * d + j];
        sbb += bv[i * d + j] * bv[i * d + j];
        sab += av[i * d + j] * bv[i * d + j];
      }
      na[i] = std::sqrt(saa);
      nb[i] = std::sqrt(sbb);
      if (na[i] == 0.0 || nb[i] == 0.0) {
        throw DegenerateInputError("cosine_rows: row " + std::to_string(i) + " has zero norm");
      }
      dots[i] = sab;
      o[i] = sab / (na[i] * nb[i]);
    }
  }
  if (detail::needs_record({&a, &b})) {
    detail::record({a, b}, out, [a, b, out, na = std::move(na), nb = std::move(nb), N, d]() mutable {
      auto dc = out.grad();
      auto cosv = out.values();
      auto av = a.values();
      auto bv = b.values();
      for (std::size_t i = 0; i < N; ++i) {
        const double c = cosv[i];
        if (a.requires_grad()) {
          auto g = a.mutable_grad();
          for (std::size_t j = 0; j < d; ++j)
            g[i * d + j] += dc[i] * (bv[i * d + j] / (na[i] * nb[i]) - c * av[i * d + j] / (na[i] * na[i]));
        }
        if (b.requires_grad()) {
          auto g = b.mutable_grad();
          for (std::size_t j = 0; j < d; ++j)
            g[i * d + j] += dc[i] * (av[i * d + j] / (na[i] * nb[i]) - c * bv[i * d + j] / (nb[i] * nb[i]));
        }
      }
    });
  }
  return out;
}

/// Mean negative log-likelihood of `targets` under a row-wise softmax of logits[N×C].
inline Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& targets) {
  detail::require_rank(logits, 2, "cross_entropy_rows");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (targets.size() != N) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(N) + " rows");
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (targets[i] >= C) {
      throw IndexError("cross_entropy_rows: target " + std::to_string(targets[i]) + " at row " +
                       std::to_string(i) + " out of range [0, " + std::to_string(C) + ")");
    }
  }
  std::vector<double> probs(N * C);
  double loss = 0.0;
  auto lv = logits.values();
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = lv.data() + i * C;
    const double mx = *std::max_element(row, row + C);
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      probs[i * C + j] = std::exp(row[j] - mx);
      s += probs[i * C + j];
    }
    for (std::size_t j = 0; j < C; ++j) probs[i * C + j] /= s;
    loss -= (row[targets[i]] - mx) - std::log(s);
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(N));
  if (detail::needs_record({&logits})) {
    detail::record({logits}, out, [logits, out, probs = std::move(probs), targets, N, C]() mutable {
      const double d = out.grad()[0] / static_cast<double>(N);
      auto g = logits.mutable_grad();
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < C; ++j)
          g[i * C + j] += d * (probs[i * C + j] - (j == targets[i] ? 1.0 : 0.0));
    });
  }
  return out;
}

}  // namespace moclip
