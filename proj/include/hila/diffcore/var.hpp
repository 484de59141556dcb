#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hila/diffcore/matrix.hpp"

namespace hila::diff {

/// Graph node. The gradient buffer is allocated on first accumulation.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
    auto& gd = grad.data();
    const auto& src = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += src[i];
  }

  void zero_grad() { grad = Matrix(); }
};

/// Handle to a node in the (dynamic, per-step) computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient after backward(); zeros if nothing flowed here.
  Matrix grad() const {
    if (node_->grad.empty()) return Matrix(rows(), cols());
    return node_->grad;
  }

  /// Scalar value of a 1x1 node.
  double item() const {
    if (node_->value.size() != 1) throw DimensionError("item() on non-scalar " + node_->value.shape());
    return node_->value.data()[0];
  }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(std::move(n));
}

/// Leaf that accumulates gradients (trainable parameter or differentiated input).
inline Var leaf(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  n->requires_grad = true;
  return Var(std::move(n));
}

namespace detail {

inline Var make_node(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.ptr());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + " shape mismatch: " + a.value().shape() + " vs " +
                         b.value().shape());
  }
}

inline void require_nonempty(const Var& a, const char* op) {
  if (a.value().empty()) throw DegenerateError(std::string(op) + " of an empty matrix");
}

inline void push_grad(Node& parent, const Matrix& g) {
  if (parent.requires_grad) parent.accumulate(g);
}

template <typename F>
Matrix map(const Matrix& m, F f) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = f(m.data()[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  Matrix out = diff::matmul(a.value(), b.value());
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(diff::matmul(self.grad, pb.value.transposed()));
    if (pb.requires_grad) pb.accumulate(diff::matmul(pa.value.transposed(), self.grad));
  });
}

inline Var transpose(const Var& a) {
  return detail::make_node(a.value().transposed(), {a}, [](Node& self) {
    detail::push_grad(*self.parents[0], self.grad.transposed());
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    detail::push_grad(*self.parents[0], self.grad);
    detail::push_grad(*self.parents[1], self.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pb.value.data()[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pa.value.data()[i];
      pb.accumulate(g);
    }
  });
}

inline Var scale(const Var& a, double s) {
  return detail::make_node(detail::map(a.value(), [s](double x) { return s * x; }), {a},
                           [s](Node& self) {
                             detail::push_grad(*self.parents[0],
                                               detail::map(self.grad, [s](double g) { return s * g; }));
                           });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var sub(const Var& a, const Var& b) { return add(a, neg(b)); }

/// 1 - a, entrywise.
inline Var one_minus(const Var& a) { return add(neg(a), constant(Matrix(a.rows(), a.cols(), 1.0))); }

inline Var sigmoid(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return detail::make_node(out, {a}, [out](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = out.data()[i];
      g.data()[i] *= s * (1.0 - s);
    }
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var tanh(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return std::tanh(x); });
  return detail::make_node(out, {a}, [out](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = out.data()[i];
      g.data()[i] *= 1.0 - t * t;
    }
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var exp(const Var& a) {
  Matrix out = detail::map(a.value(), [](double x) { return std::exp(x); });
  return detail::make_node(out, {a}, [out](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= out.data()[i];
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var log(const Var& a) {
  const Matrix& v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v.data()[i] > 0.0)) {
      throw DomainError("log of non-positive entry " + std::to_string(v.data()[i]) + " at (" +
                        std::to_string(i / v.cols()) + ", " + std::to_string(i % v.cols()) + ")");
    }
  }
  return detail::make_node(detail::map(v, [](double x) { return std::log(x); }), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= x.data()[i];
    detail::push_grad(*self.parents[0], g);
  });
}

/// max(a, lo) entrywise; no gradient flows through clamped entries.
inline Var clamp_min(const Var& a, double lo) {
  return detail::make_node(detail::map(a.value(), [lo](double x) { return x < lo ? lo : x; }), {a},
                           [lo](Node& self) {
                             const Matrix& x = self.parents[0]->value;
                             Matrix g = self.grad;
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (x.data()[i] < lo) g.data()[i] = 0.0;
                             detail::push_grad(*self.parents[0], g);
                           });
}

// ---------------------------------------------------------------------------
// Reductions. sum_cols and mean_rows collapse the row index (result 1 x cols);
// sum_rows collapses the column index (result rows x 1).

inline Var sum_all(const Var& a) {
  detail::require_nonempty(a, "sum_all");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return detail::make_node(Matrix(1, 1, s), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    detail::push_grad(*self.parents[0], Matrix(x.rows(), x.cols(), self.grad.data()[0]));
  });
}

inline Var sum_rows(const Var& a) {
  detail::require_nonempty(a, "sum_rows");
  const Matrix& v = a.value();
  Matrix out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, 0) += v(r, c);
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) g(r, c) = self.grad(r, 0);
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var sum_cols(const Var& a) {
  detail::require_nonempty(a, "sum_cols");
  const Matrix& v = a.value();
  Matrix out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c);
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) g(r, c) = self.grad(0, c);
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var mean_rows(const Var& a) {
  detail::require_nonempty(a, "mean_rows");
  return scale(sum_cols(a), 1.0 / static_cast<double>(a.rows()));
}

// ---------------------------------------------------------------------------
// Structural

inline Var concat_rows(const Var& a, const Var& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows column mismatch: " + a.value().shape() + " vs " + b.value().shape());
  }
  std::vector<double> data = a.value().data();
  data.insert(data.end(), b.value().data().begin(), b.value().data().end());
  Matrix out(a.rows() + b.rows(), a.cols(), std::move(data));
  const std::size_t split = a.value().size();
  return detail::make_node(std::move(out), {a, b}, [split](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad.data();
    if (pa.requires_grad)
      pa.accumulate(Matrix(pa.value.rows(), pa.value.cols(), std::vector<double>(g.begin(), g.begin() + split)));
    if (pb.requires_grad)
      pb.accumulate(Matrix(pb.value.rows(), pb.value.cols(), std::vector<double>(g.begin() + split, g.end())));
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.cols() == 0) return b;
  if (b.cols() == 0) return a;
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols row mismatch: " + a.value().shape() + " vs " + b.value().shape());
  }
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) out(r, c) = a.value()(r, c);
    for (std::size_t c = 0; c < cb; ++c) out(r, ca + c) = b.value()(r, c);
  }
  return detail::make_node(std::move(out), {a, b}, [ca, cb](Node& self) {
    const std::size_t rows = self.value.rows();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g(rows, ca);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) g(r, c) = self.grad(r, c);
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Matrix g(rows, cb);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) g(r, c) = self.grad(r, ca + c);
      pb.accumulate(g);
    }
  });
}

inline Var gather_rows(const Var& a, std::span<const std::size_t> idx) {
  std::vector<std::size_t> keep(idx.begin(), idx.end());
  return detail::make_node(a.value().gather_rows(idx), {a}, [keep](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) g(keep[i], c) += self.grad(i, c);
    detail::push_grad(*self.parents[0], g);
  });
}

/// Single entry as a 1x1 node.
inline Var element(const Var& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) {
    throw DimensionError("element (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                         a.value().shape());
  }
  return detail::make_node(Matrix(1, 1, a.value()(r, c)), {a}, [r, c](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    g(r, c) = self.grad.data()[0];
    detail::push_grad(*self.parents[0], g);
  });
}

inline Var softmax_cols(const Var& a) {
  Matrix out = diff::softmax_cols(a.value());
  return detail::make_node(out, {a}, [out](Node& self) {
    // per column: dx = s * (g - <g, s>)
    Matrix g(out.rows(), out.cols());
    for (std::size_t c = 0; c < out.cols(); ++c) {
      double inner = 0.0;
      for (std::size_t r = 0; r < out.rows(); ++r) inner += self.grad(r, c) * out(r, c);
      for (std::size_t r = 0; r < out.rows(); ++r) g(r, c) = out(r, c) * (self.grad(r, c) - inner);
    }
    detail::push_grad(*self.parents[0], g);
  });
}

/// Running product along each row: out[r][t] = prod_{s <= t} a[r][s].
inline Var cumprod_cols(const Var& a) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double p = 1.0;
    for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = (p *= v(r, c));
  }
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    // d out[t] / d x[s] = prod_{j <= t, j != s} x[j]; computed without division.
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t s = 0; s < x.cols(); ++s) {
        double prefix = 1.0;
        for (std::size_t j = 0; j < s; ++j) prefix *= x(r, j);
        double acc = 0.0;
        double running = prefix;
        for (std::size_t t = s; t < x.cols(); ++t) {
          if (t > s) running *= x(r, t);
          acc += self.grad(r, t) * running;
        }
        g(r, s) = acc;
      }
    }
    detail::push_grad(*self.parents[0], g);
  });
}

/// Affine map x * weight + bias, with bias (1 x out) repeated over rows.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Var ones = constant(Matrix(x.rows(), 1, 1.0));
  return add(matmul(x, weight), matmul(ones, bias));
}

/// Dot product of two same-shape nodes as 1x1.
inline Var dot(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

// ---------------------------------------------------------------------------

/// Reverse sweep from a scalar root. Each node's backward runs exactly once,
/// after all of its consumers (reverse topological order).
inline void backward(const Var& root) {
  if (root.value().size() != 1) throw DimensionError("backward() needs a scalar root, got " + root.value().shape());
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node().accumulate(Matrix(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace hila::diff
