#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation as a node holding its value and a closure
// that pushes the node's gradient to its inputs. Parameters are bound by
// reference: the tape reads their value in place and backward() accumulates
// straight into a caller-owned gradient matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muse/common.hpp"

namespace muse {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

namespace ad {

class Tape;

/// Handle to a tape node.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();

  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
  bool operator==(const Var&) const = default;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  /// References an external matrix without copying; no gradient flows.
  Var constant_ref(const Matrix& value) {
    Node n;
    n.ref = &value;
    return push(std::move(n));
  }

  /// Binds an external parameter. `value` and `grad` must outlive the tape;
  /// `grad` must already have the shape of `value`.
  Var parameter(const Matrix& value, Matrix& grad) {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      throw validation_error("parameter gradient shape differs from value");
    }
    Node n;
    n.ref = &value;
    n.sink = &grad;
    n.requires_grad = true;
    return push(std::move(n));
  }

  /// Records an operation result. `backward` receives the output gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  Var record(Matrix value, std::span<const Var> inputs, Backward backward) {
    Node n;
    n.owned = std::move(value);
    for (Var in : inputs) n.requires_grad = n.requires_grad || nodes_.at(in.id).requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.owned;
  }

  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw validation_error("expected a 1x1 value");
    return m(0, 0);
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Adds `g` to the gradient of `v`; no-op for constants.
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return;
    grad_storage(n) += g;
  }

  /// Mutable gradient buffer of `v`, allocated on first use. Only valid
  /// for nodes that require a gradient.
  Matrix& grad(Var v) { return grad_storage(nodes_.at(v.id)); }

  /// Gradient of a node computed by the last backward() pass (zeros if
  /// none reached it).
  Matrix gradient(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.sink) return *n.sink;
    if (n.grad.size() == 0) return Matrix::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  /// Back-propagates from a scalar root. Parameter gradients are added to
  /// their sinks, so callers zero sinks between steps.
  void backward(Var root) {
    if (value(root).size() != 1) throw validation_error("backward root must be a scalar");
    if (!nodes_.at(root.id).requires_grad) return;
    grad(root)(0, 0) += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      Matrix g = std::move(n.grad);
      n.grad = Matrix();
      n.backward(*this, g);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Matrix& grad_storage(Node& n) {
    if (n.sink) return *n.sink;
    const Matrix& v = n.ref ? *n.ref : n.owned;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(v.rows(), v.cols());
    return n.grad;
  }

  std::vector<Node> nodes_;
};

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw validation_error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()) + ")");
  }
}

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) throw validation_error("matmul: inner dimensions differ");
  return t.record(A * B, {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

/// a * b^T; with row-vector inputs this applies a (out x in) weight b.
inline Var matmul_nt(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols()) throw validation_error("matmul_nt: inner dimensions differ");
  return t.record(A * B.transpose(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

inline Var transpose(Tape& t, Var a) {
  return t.record(t.value(a).transpose(), {a},
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

/// Hadamard product.
inline Var mul(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "mul");
  return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

inline Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

/// Adds a 1 x n row to every row of a (m x n).
inline Var add_row(Tape& t, Var a, Var row) {
  const Matrix& A = t.value(a);
  const Matrix& R = t.value(row);
  if (R.rows() != 1 || R.cols() != A.cols()) throw validation_error("add_row: row shape mismatch");
  Matrix out = A.rowwise() + R.row(0);
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

inline Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return detail::logistic(x); });
  Matrix y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  Matrix y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).cwiseMax(0.0);
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix mask = (t.value(a).array() > 0.0).cast<double>().matrix();
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

/// Elementwise sqrt(a + eps); inputs must keep a + eps positive.
inline Var sqrt_eps(Tape& t, Var a, double eps) {
  Matrix out = (t.value(a).array() + eps).sqrt().matrix();
  Matrix y = out;
  return t.record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() / (2.0 * y.array())).matrix());
  });
}

/// c - a, elementwise.
inline Var rsub_scalar(Tape& t, double c, Var a) {
  Matrix out = (c - t.value(a).array()).matrix();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, -g); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows()) throw validation_error("concat_cols: row counts differ");
  Matrix out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Eigen::Index ca = A.cols(), cb = B.cols();
  return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Matrix& g) {
    t.accumulate(a, g.leftCols(ca));
    t.accumulate(b, g.rightCols(cb));
  });
}

/// Stacks 1 x n rows into a k x n matrix.
inline Var stack_rows(Tape& t, std::span<const Var> rows) {
  if (rows.empty()) throw validation_error("stack_rows: no rows");
  const Eigen::Index cols = t.value(rows[0]).cols();
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Matrix& r = t.value(rows[i]);
    if (r.rows() != 1 || r.cols() != cols) throw validation_error("stack_rows: every input must be 1 x n");
    out.row(static_cast<Eigen::Index>(i)) = r.row(0);
  }
  std::vector<Var> ins(rows.begin(), rows.end());
  return t.record(std::move(out), rows, [ins = std::move(ins)](Tape& t, const Matrix& g) {
    for (std::size_t i = 0; i < ins.size(); ++i) t.accumulate(ins[i], g.row(static_cast<Eigen::Index>(i)));
  });
}

/// Gathers rows by index (repeats allowed); gradients scatter-add back.
inline Var select_rows(Tape& t, Var a, std::vector<std::size_t> idx) {
  const Matrix& A = t.value(a);
  Matrix out(static_cast<Eigen::Index>(idx.size()), A.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= static_cast<std::size_t>(A.rows())) throw index_error("select_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = A.row(static_cast<Eigen::Index>(idx[i]));
  }
  return t.record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Eigen::Index>(idx[i])) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

/// Appends zero rows until `a` has `total` rows.
inline Var pad_rows(Tape& t, Var a, std::size_t total) {
  const Matrix& A = t.value(a);
  const auto rows = static_cast<std::size_t>(A.rows());
  if (total <= rows) return a;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(total), A.cols());
  out.topRows(A.rows()) = A;
  const Eigen::Index n = A.rows();
  return t.record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) { t.accumulate(a, g.topRows(n)); });
}

inline Var top_rows(Tape& t, Var a, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return select_rows(t, a, std::move(idx));
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    t.accumulate(a, Matrix::Constant(A.rows(), A.cols(), g(0, 0)));
  });
}

inline Var sum_squares(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).squaredNorm();
  return t.record(std::move(out), {a},
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, 2.0 * g(0, 0) * t.value(a)); });
}

/// Sum of a list of 1 x 1 scalars.
inline Var add_n(Tape& t, std::span<const Var> terms) {
  if (terms.empty()) return t.constant(Matrix::Zero(1, 1));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(t, acc, terms[i]);
  return acc;
}

/// Column means as a 1 x n row.
inline Var col_mean(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  const double inv = 1.0 / static_cast<double>(A.rows());
  Matrix out = A.colwise().sum() * inv;
  return t.record(std::move(out), {a}, [a, inv](Tape& t, const Matrix& g) {
    const Matrix& A = t.value(a);
    Matrix ga = g.replicate(A.rows(), 1) * inv;
    t.accumulate(a, ga);
  });
}

/// Diagonal of a square matrix as a 1 x n row.
inline Var diagonal(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  if (A.rows() != A.cols()) throw validation_error("diagonal: matrix is not square");
  Matrix out = A.diagonal().transpose();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
    ga.diagonal() = g.row(0).transpose();
    t.accumulate(a, ga);
  });
}

/// Sum over j != k of a_jk^2 for a square matrix.
inline Var offdiag_sum_squares(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  if (A.rows() != A.cols()) throw validation_error("offdiag_sum_squares: matrix is not square");
  Matrix out(1, 1);
  out(0, 0) = A.squaredNorm() - A.diagonal().squaredNorm();
  return t.record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix ga = 2.0 * g(0, 0) * t.value(a);
    ga.diagonal().setZero();
    t.accumulate(a, ga);
  });
}

/// log-sum-exp of a 1 x n row, computed with max shifting.
inline double log_sum_exp(const Matrix& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

/// -log softmax(logits)[target] for a 1 x n logit row.
inline Var cross_entropy(Tape& t, Var logits, std::size_t target) {
  const Matrix& L = t.value(logits);
  if (L.rows() != 1) throw validation_error("cross_entropy: logits must be a single row");
  if (target >= static_cast<std::size_t>(L.cols())) throw index_error("cross_entropy: target outside vocabulary");
  const double lse = log_sum_exp(L);
  Matrix out(1, 1);
  out(0, 0) = lse - L(0, static_cast<Eigen::Index>(target));
  return t.record(std::move(out), {logits}, [logits, target, lse](Tape& t, const Matrix& g) {
    Matrix p = (t.value(logits).array() - lse).exp().matrix();
    p(0, static_cast<Eigen::Index>(target)) -= 1.0;
    t.accumulate(logits, g(0, 0) * p);
  });
}

}  // namespace ad
}  // namespace muse
