#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// Every op appends one node after its parents, so the tape is always in
// topological order and backward() is a single reverse sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ganevent/core/error.hpp"
#include "ganevent/core/random.hpp"
#include "ganevent/core/tensor.hpp"

namespace ganevent::nn {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  inline bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr, {}, "constant"); }

  /// Leaf bound to a trainable parameter; backward() accumulates into param.grad.
  Var param(const Parameter& p) { return push(p.value, true, &p, {}, "param"); }

  /// Leaf that records a gradient without being bound to a parameter.
  Var variable(Tensor value) { return push(std::move(value), true, nullptr, {}, "variable"); }

  /// Appends an op result. `backward` is dropped when no parent needs gradients.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward, std::string_view op) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.index()].requires_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(backward) : BackwardFn{}, op);
  }

  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward, std::string_view op) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || nodes_[p.index()].requires_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(backward) : BackwardFn{}, op);
  }

  const Tensor& value(std::size_t i) const { return nodes_[i].value; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }

  /// Gradient buffer of node i, allocated on first use. Null if i does not need one.
  Tensor* grad_if(std::size_t i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return &n.grad;
  }

  const Tensor& grad(std::size_t i) const { return nodes_[i].grad; }

  /// Gradient of node i seen by the last backward(); zeros if none flowed.
  Tensor gradient_of(Var v) const {
    const Node& n = nodes_[v.index()];
    return n.has_grad ? n.grad : Tensor(n.value.shape());
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates d(loss)/d(node) to every parameter leaf, then clears the tape
  /// unless `keep` is set (tests use it to inspect intermediate gradients).
  void backward(Var loss, bool keep = false) {
    if (loss.value().size() != 1)
      throw ContractError("backward() requires a scalar loss, got shape " + shape_string(loss.value().shape()));
    if (nodes_.empty()) throw ContractError("backward() on an empty tape");
    if (Tensor* g = grad_if(loss.index())) (*g)[0] = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
    if (!keep) clear();
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, const Parameter* param, BackwardFn backward, std::string_view op) {
    if (!value.all_finite()) throw NumericError("non-finite value produced by " + std::string(op));
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false, param, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(index_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(index_); }

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

inline void check_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("vars live on different tapes");
}

enum class Broadcast { same, row, scalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " onto " +
                       shape_string(a.shape()));
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::same: return i;
    case Broadcast::row: return i % cols;
    case Broadcast::scalar: return 0;
  }
  return 0;
}

template <class F, class DF>
Var unary(Var a, std::string_view op, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, df](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < x.size(); ++i) (*gx)[i] += gy[i] * df(x[i], y[i]);
  }, op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows())
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(A.shape()) + " x " +
                         shape_string(B.shape()));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(C), {a, b}, [ai, bi, m, k, n](Tape& t, std::size_t self) {
    const Tensor& gC = t.grad(self);
    if (Tensor* gA = t.grad_if(ai)) {
      const Tensor& B = t.value(bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gC[i * n + j] * B[p * n + j];
          (*gA)[i * k + p] += s;
        }
    }
    if (Tensor* gB = t.grad_if(bi)) {
      const Tensor& A = t.value(ai);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gb = &(*gB)[p * n];
          const double* gc = &gC[i * n];
          for (std::size_t j = 0; j < n; ++j) gb[j] += av * gc[j];
        }
    }
  }, "matmul");
}

inline Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y = Tensor::zeros(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, r, c](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += gy[j * r + i];
  }, "transpose");
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. `b` may be the same shape as `a`, a single row
// broadcast down the rows of `a`, or a scalar.

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind(x, z, "add");
  const std::size_t cols = x.cols();
  Tensor y(Shape{x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[detail::bindex(kind, i, cols)];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(y), {a, b}, [ai, bi, kind, cols](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (Tensor* ga = t.grad_if(ai)) detail::add_into(*ga, gy);
    if (Tensor* gb = t.grad_if(bi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[detail::bindex(kind, i, cols)] += gy[i];
  }, "add");
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind(x, z, "sub");
  const std::size_t cols = x.cols();
  Tensor y(Shape{x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[detail::bindex(kind, i, cols)];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(y), {a, b}, [ai, bi, kind, cols](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (Tensor* ga = t.grad_if(ai)) detail::add_into(*ga, gy);
    if (Tensor* gb = t.grad_if(bi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[detail::bindex(kind, i, cols)] -= gy[i];
  }, "sub");
}

inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const auto kind = detail::broadcast_kind(x, z, "mul");
  const std::size_t cols = x.cols();
  Tensor y(Shape{x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[detail::bindex(kind, i, cols)];
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(y), {a, b}, [ai, bi, kind, cols](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& z = t.value(bi);
    if (Tensor* ga = t.grad_if(ai))
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * z[detail::bindex(kind, i, cols)];
    if (Tensor* gb = t.grad_if(bi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[detail::bindex(kind, i, cols)] += gy[i] * x[i];
  }, "mul");
}

inline Var scale(Var a, double c) {
  return detail::unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary(a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var neg(Var a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Activations and elementwise functions

inline Var relu(Var a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var a, double slope = 0.01) {
  return detail::unary(a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Var sigmoid(Var a) {
  return detail::unary(a, "sigmoid", sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var softplus(Var a) {
  return detail::unary(a, "softplus", softplus_value, [](double x, double) { return sigmoid_value(x); });
}

/// log(sigmoid(x)) without overflow for large |x|.
inline Var log_sigmoid(Var a) {
  return detail::unary(a, "log_sigmoid", [](double x) { return -softplus_value(-x); },
                       [](double x, double) { return sigmoid_value(-x); });
}

inline Var square(Var a) {
  return detail::unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ai = a.index();
  return a.tape().record(Tensor::scalar(s), {a}, [ai](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor* gx = t.grad_if(ai);
    for (double& v : gx->values()) v += g;
  }, "sum");
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// Column means over the rows: (m x n) -> (1 x n).
inline Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ContractError("mean_rows of an empty matrix");
  Tensor y = Tensor::zeros(1, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
  for (double& v : y.values()) v /= static_cast<double>(m);
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, m, n](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += gy[j] * inv;
  }, "mean_rows");
}

/// Row sums: (m x n) -> (m x 1).
inline Var sum_cols(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y = Tensor::zeros(m, 1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += x[i * n + j];
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, m, n](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += gy[i];
  }, "sum_cols");
}

/// Row minimum: (m x n) -> (m x 1). The gradient goes to the first minimizer.
inline Var row_min(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw ContractError("row_min over zero columns");
  Tensor y = Tensor::zeros(m, 1);
  std::vector<std::size_t> arg(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    double best = x[i * n];
    for (std::size_t j = 1; j < n; ++j)
      if (x[i * n + j] < best) {
        best = x[i * n + j];
        arg[i] = j;
      }
    y[i] = best;
  }
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, n, arg = std::move(arg)](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < arg.size(); ++i) (*gx)[i * n + arg[i]] += gy[i];
  }, "row_min");
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax along each row, max-subtracted.
inline Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = &x[i * n];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(xr[j] - mx);
      s += y[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= s;
  }
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, m, n](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * n + j] += y[i * n + j] * (gy[i * n + j] - dot);
    }
  }, "softmax");
}

/// Softmax along `axis` (0 = down columns, 1 = along rows).
inline Var softmax(Var a, std::size_t axis = 1) {
  if (axis == 1) return softmax_rows(a);
  if (axis == 0) return transpose(softmax_rows(transpose(a)));
  throw ContractError("softmax axis must be 0 or 1");
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row standardization followed by an affine map with `gain` and `bias` (1 x n).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps) {
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  Tensor xhat(Shape{m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (X[i * n + j] - mu) * (X[i * n + j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat[i * n + j] = (X[i * n + j] - mu) * inv_std[i];
  }
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = xhat[i * n + j] * G[j] + B[j];
  const std::size_t xi = x.index(), gi = gain.index(), bi = bias.index();
  return x.tape().record(
      std::move(y), {x, gain, bias},
      [xi, gi, bi, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        const Tensor& G = t.value(gi);
        if (Tensor* gg = t.grad_if(gi))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gy[i * n + j] * xhat[i * n + j];
        if (Tensor* gb = t.grad_if(bi))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*gb)[j] += gy[i * n + j];
        if (Tensor* gx = t.grad_if(xi)) {
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = gy[i * n + j] * G[j];
              mean_d += d;
              mean_dx += d * xhat[i * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = gy[i * n + j] * G[j];
              (*gx)[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
            }
          }
        }
      },
      "layer_norm");
}

// ---------------------------------------------------------------------------
// Structural ops

/// Columns [begin, begin + count).
inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (begin + count > n) throw DimensionError("slice_cols out of range");
  Tensor y = Tensor::zeros(m, count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = x[i * n + begin + j];
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, m, n, begin, count](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) (*gx)[i * n + begin + j] += gy[i * count + j];
  }, "slice_cols");
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.cols();
  }
  Tensor y = Tensor::zeros(m, n);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node, column offset)
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) y[i * n + off + j] = x[i * c + j];
    spans.emplace_back(p.index(), off);
    off += c;
  }
  return parts.front().tape().record(std::move(y), parts, [spans, m, n](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    for (const auto& [idx, off] : spans) {
      Tensor* gx = t.grad_if(idx);
      if (gx == nullptr) continue;
      const std::size_t c = t.value(idx).cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += gy[i * n + off + j];
    }
  }, "concat_cols");
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.rows();
  }
  std::vector<double> data;
  data.reserve(m * n);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node, flat offset)
  for (const Var& p : parts) {
    spans.emplace_back(p.index(), data.size());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  return parts.front().tape().record(Tensor({m, n}, std::move(data)), parts, [spans](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    for (const auto& [idx, off] : spans) {
      Tensor* gx = t.grad_if(idx);
      if (gx == nullptr) continue;
      for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += gy[off + k];
    }
  }, "concat_rows");
}

/// Gathers rows by index (indices may repeat).
inline Var take_rows(Var a, std::vector<std::size_t> indices) {
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  Tensor y = Tensor::zeros(indices.size(), n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw DimensionError("take_rows index out of range");
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = x[indices[r] * n + j];
  }
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, n, indices = std::move(indices)](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) (*gx)[indices[r] * n + j] += gy[r * n + j];
  }, "take_rows");
}

/// Copy of `a` with the listed rows replaced by the single row `replacement`.
inline Var replace_rows(Var a, std::vector<std::size_t> indices, Var replacement) {
  detail::check_same_tape(a, replacement);
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (replacement.value().size() != n) throw DimensionError("replace_rows: replacement width mismatch");
  std::vector<char> replaced(m, 0);
  for (std::size_t i : indices) {
    if (i >= m) throw DimensionError("replace_rows index out of range");
    replaced[i] = 1;
  }
  Tensor y(Shape{m, n}, x.values());
  const Tensor& r = replacement.value();
  for (std::size_t i = 0; i < m; ++i)
    if (replaced[i])
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = r[j];
  const std::size_t ai = a.index(), ri = replacement.index();
  return a.tape().record(std::move(y), {a, replacement}, [ai, ri, m, n, replaced = std::move(replaced)](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    Tensor* gr = t.grad_if(ri);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (replaced[i]) {
          if (gr) (*gr)[j] += gy[i * n + j];
        } else if (gx) {
          (*gx)[i * n + j] += gy[i * n + j];
        }
      }
  }, "replace_rows");
}

/// Copy of `a` with row indices[r] replaced by row r of `rows`.
inline Var scatter_rows(Var a, std::vector<std::size_t> indices, Var rows) {
  detail::check_same_tape(a, rows);
  const Tensor& x = a.value();
  const Tensor& r = rows.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (r.rows() != indices.size() || r.cols() != n) throw DimensionError("scatter_rows: replacement shape mismatch");
  std::vector<std::ptrdiff_t> source(m, -1);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= m) throw DimensionError("scatter_rows index out of range");
    if (source[indices[k]] >= 0) throw ContractError("scatter_rows: repeated index");
    source[indices[k]] = static_cast<std::ptrdiff_t>(k);
  }
  Tensor y(Shape{m, n}, x.values());
  for (std::size_t i = 0; i < m; ++i)
    if (source[i] >= 0)
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = r[static_cast<std::size_t>(source[i]) * n + j];
  const std::size_t ai = a.index(), ri = rows.index();
  return a.tape().record(std::move(y), {a, rows}, [ai, ri, m, n, source = std::move(source)](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    Tensor* gr = t.grad_if(ri);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (source[i] >= 0) {
          if (gr) (*gr)[static_cast<std::size_t>(source[i]) * n + j] += gy[i * n + j];
        } else if (gx) {
          (*gx)[i * n + j] += gy[i * n + j];
        }
      }
  }, "scatter_rows");
}

/// Value copy with no gradient path.
inline Var detach(Var a) { return a.tape().constant(a.value()); }

/// Inverted dropout: zeroes entries with probability p and scales survivors by 1/(1-p).
inline Var dropout(Var a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  require(p < 1.0, "dropout probability must be below 1");
  const Tensor& x = a.value();
  std::vector<double> mask(x.size());
  const double keep = 1.0 / (1.0 - p);
  for (double& v : mask) v = rng.uniform() < p ? 0.0 : keep;
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  const std::size_t ai = a.index();
  return a.tape().record(std::move(y), {a}, [ai, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor* gx = t.grad_if(ai);
    for (std::size_t i = 0; i < mask.size(); ++i) (*gx)[i] += gy[i] * mask[i];
  }, "dropout");
}

// ---------------------------------------------------------------------------
// Similarities and distances

inline constexpr double kCosineEps = 1e-12;

enum class Distance { cosine, l1, l2 };

inline std::string_view to_string(Distance d) {
  switch (d) {
    case Distance::cosine: return "cosine";
    case Distance::l1: return "L1";
    case Distance::l2: return "L2";
  }
  return "?";
}

inline Distance distance_from_string(std::string_view s) {
  if (s == "cosine") return Distance::cosine;
  if (s == "L1" || s == "l1") return Distance::l1;
  if (s == "L2" || s == "l2") return Distance::l2;
  throw ContractError("unknown distance function '" + std::string(s) + "' (expected cosine, L1 or L2)");
}

namespace detail {

struct CosineParts {
  double dot, na, nb, value;
  bool clamped;
  bool guarded;  // norm product fell below kCosineEps and was replaced by it
};

inline CosineParts cosine_parts(const double* x, const double* y, std::size_t d) {
  double dot = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    dot += x[k] * y[k];
    sx += x[k] * x[k];
    sy += y[k] * y[k];
  }
  const double na = std::sqrt(sx), nb = std::sqrt(sy);
  const bool guarded = na * nb < kCosineEps;
  const double raw = dot / (guarded ? kCosineEps : na * nb);
  const double c = std::clamp(raw, -1.0, 1.0);
  return {dot, na, nb, c, c != raw, guarded};
}

/// Adds g * d(cos)/dx into gx and g * d(cos)/dy into gy.
inline void cosine_backward(const double* x, const double* y, std::size_t d, const CosineParts& p, double g,
                            double* gx, double* gy) {
  if (p.clamped || g == 0.0) return;
  const double D = p.guarded ? kCosineEps : p.na * p.nb;
  const double inv = 1.0 / D;
  const double q = p.guarded ? 0.0 : p.dot / (D * D);
  const double ax = p.guarded ? 0.0 : q * p.nb / p.na;
  const double ay = p.guarded ? 0.0 : q * p.na / p.nb;
  for (std::size_t k = 0; k < d; ++k) {
    if (gx) gx[k] += g * (y[k] * inv - ax * x[k]);
    if (gy) gy[k] += g * (x[k] * inv - ay * y[k]);
  }
}

}  // namespace detail

/// dot(x, y) / max(|x||y|, 1e-12), clamped to [-1, 1]. A zero vector gives 0.
inline double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("cosine_similarity: length mismatch");
  return detail::cosine_parts(x.data(), y.data(), x.size()).value;
}

/// Differentiable cosine similarity of two equal-length vectors -> scalar.
inline Var cosine_similarity(Var x, Var y) {
  detail::check_same_tape(x, y);
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  if (X.size() != Y.size()) throw DimensionError("cosine_similarity: length mismatch");
  const std::size_t d = X.size();
  const auto parts = detail::cosine_parts(X.data().data(), Y.data().data(), d);
  const std::size_t xi = x.index(), yi = y.index();
  return x.tape().record(Tensor::scalar(parts.value), {x, y}, [xi, yi, d, parts](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor* gx = t.grad_if(xi);
    Tensor* gy = t.grad_if(yi);
    detail::cosine_backward(t.value(xi).data().data(), t.value(yi).data().data(), d, parts, g,
                            gx ? gx->data().data() : nullptr, gy ? gy->data().data() : nullptr);
  }, "cosine_similarity");
}

/// Cosine similarity of paired rows: (m x d), (m x d) -> (m x 1).
inline Var rowwise_cosine(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) throw DimensionError("rowwise_cosine: shape mismatch");
  const std::size_t m = A.rows(), d = A.cols();
  std::vector<detail::CosineParts> parts(m);
  Tensor y = Tensor::zeros(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    parts[i] = detail::cosine_parts(&A[i * d], &B[i * d], d);
    y[i] = parts[i].value;
  }
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(y), {a, b}, [ai, bi, m, d, parts = std::move(parts)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ai);
    const Tensor& B = t.value(bi);
    Tensor* ga = t.grad_if(ai);
    Tensor* gb = t.grad_if(bi);
    for (std::size_t i = 0; i < m; ++i)
      detail::cosine_backward(&A[i * d], &B[i * d], d, parts[i], g[i], ga ? &(*ga)[i * d] : nullptr,
                              gb ? &(*gb)[i * d] : nullptr);
  }, "rowwise_cosine");
}

/// Scalar distance between two vectors under `kind`.
inline double distance(std::span<const double> x, std::span<const double> y, Distance kind) {
  if (x.size() != y.size()) throw DimensionError("distance: length mismatch");
  double s = 0.0;
  switch (kind) {
    case Distance::cosine: return 1.0 - cosine_similarity(x, y);
    case Distance::l1:
      for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
      return s;
    case Distance::l2:
      for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      return s;
  }
  return s;
}

/// Matrix of distances between every row of `a` (m x d) and every row of `b` (k x d).
inline Var pairwise_distance(Var a, Var b, Distance kind) {
  detail::check_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) throw DimensionError("pairwise_distance: dimension mismatch");
  const std::size_t m = A.rows(), k = B.rows(), d = A.cols();
  Tensor y = Tensor::zeros(m, k);
  std::vector<detail::CosineParts> parts(kind == Distance::cosine ? m * k : 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (kind == Distance::cosine) {
        parts[i * k + j] = detail::cosine_parts(&A[i * d], &B[j * d], d);
        y[i * k + j] = 1.0 - parts[i * k + j].value;
      } else {
        y[i * k + j] = distance(A.row_span(i), B.row_span(j), kind);
      }
    }
  const std::size_t ai = a.index(), bi = b.index();
  return a.tape().record(std::move(y), {a, b}, [ai, bi, m, k, d, kind, parts = std::move(parts)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& A = t.value(ai);
    const Tensor& B = t.value(bi);
    Tensor* ga = t.grad_if(ai);
    Tensor* gb = t.grad_if(bi);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double gij = g[i * k + j];
        if (gij == 0.0) continue;
        double* gai = ga ? &(*ga)[i * d] : nullptr;
        double* gbj = gb ? &(*gb)[j * d] : nullptr;
        if (kind == Distance::cosine) {
          detail::cosine_backward(&A[i * d], &B[j * d], d, parts[i * k + j], -gij, gai, gbj);
          continue;
        }
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = A[i * d + c] - B[j * d + c];
          const double local = kind == Distance::l2 ? 2.0 * diff : (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
          if (gai) gai[c] += gij * local;
          if (gbj) gbj[c] -= gij * local;
        }
      }
  }, "pairwise_distance");
}

}  // namespace ganevent::nn
