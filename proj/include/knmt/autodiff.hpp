#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// A Graph is rebuilt for every minibatch (or decoding step). Each op appends a
// node holding its value and a backward rule; backward() walks the nodes in
// reverse creation order, which is a valid reverse topological order.
// Rank-1 tensors behave as 1×n rows in matrix ops.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "knmt/tensor.hpp"

namespace knmt {

template <typename Real>
class Graph;

/// Handle to a node of a Graph.
template <typename Real>
struct Expr {
  Graph<Real>* graph = nullptr;
  std::uint32_t id = 0;

  const Shape& shape() const { return graph->shape(*this); }
  std::span<const Real> value() const { return graph->value(*this); }
  std::size_t rows() const;
  std::size_t cols() const;
};

struct GraphOptions {
  /// Raise NumericError when an op produces NaN/Inf.
  bool checked = false;
  /// When false no backward rules are recorded (decoding).
  bool grad_enabled = true;
};

/// Ops reachable through forward_op(); the same set is exercised by the
/// randomized gradient tests.
enum class OpKind {
  MatMul,      // a[m×k] · b[k×n]
  MatMulNT,    // a[m×k] · b[n×k]ᵀ
  Add,         // same shape
  Sub,
  Mul,         // elementwise
  AddBias,     // x[m×n] + row b[n] broadcast over rows
  ScaleRows,   // w[m×1] ⊙ x[m×n], broadcast over columns
  Tanh,
  Sigmoid,
  Softmax,     // row-wise
  LogSoftmax,  // row-wise
  Sum,         // all entries → [1]
  MeanRows,    // mean over axis 0 → [1×n]
  MeanCols,    // mean over axis 1 → [m×1]
  ConcatCols,
  ConcatRows,
};

std::string op_name(OpKind kind);

template <typename Real>
class Graph {
 public:
  using Ex = Expr<Real>;

  explicit Graph(GraphOptions options = {}) : options_(options) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const GraphOptions& options() const { return options_; }
  std::size_t size() const { return nodes_.size(); }

  Ex constant(Tensor<Real> value);
  Ex constant(Shape shape, std::vector<Real> values);
  /// Leaf aliasing `param`. No copy is taken; when `param.requires_grad` the
  /// gradient is accumulated into `param.grad`.
  Ex parameter(Tensor<Real>& param);

  const Shape& shape(Ex x) const { return nodes_[x.id].shape; }
  std::span<const Real> value(Ex x) const;
  /// Gradient of an interior node after backward(); empty if none reached it.
  std::span<const Real> grad(Ex x) const;
  Tensor<Real> tensor(Ex x) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  void backward(Ex loss);

  Ex forward_op(OpKind kind, std::span<const Ex> inputs);

  Ex matmul(Ex a, Ex b);
  Ex matmul_nt(Ex a, Ex b);
  Ex add(Ex a, Ex b);
  Ex sub(Ex a, Ex b);
  Ex mul(Ex a, Ex b);
  Ex add_bias(Ex x, Ex bias);
  Ex scale_rows(Ex w, Ex x);
  /// scale * x + shift with constant scalars.
  Ex affine(Ex x, Real scale, Real shift);
  Ex tanh(Ex x);
  Ex sigmoid(Ex x);
  Ex softmax(Ex x);
  Ex log_softmax(Ex x);
  Ex sum(Ex x);
  Ex mean(Ex x, int axis);
  Ex concat(std::span<const Ex> parts, int axis);
  Ex slice(Ex x, int axis, std::size_t begin, std::size_t end);
  /// Row gather from a table; gradient is scattered back into the table.
  Ex lookup(Ex table, std::span<const int> ids);
  /// One entry per row: y[i] = x[i, ids[i]], shape [m×1].
  Ex pick(Ex x, std::span<const int> ids);
  /// Per-row standardization followed by gain ⊙ x̂ + bias.
  Ex layer_norm(Ex x, Ex gain, Ex bias, Real epsilon);

 private:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    Tensor<Real>* param = nullptr;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::function<void(Graph&, std::uint32_t)> backward;
  };

  bool needs_grad(Ex x) const { return nodes_[x.id].requires_grad; }
  const Real* val(std::uint32_t id) const;
  /// Accumulation buffer for node `id`, allocated (zeroed) on first use.
  Real* acc(std::uint32_t id);
  std::span<const Real> out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  Ex emit(const char* op, Shape shape, std::vector<Real> value, bool requires_grad,
          std::function<void(Graph&, std::uint32_t)> backward);
  void check_graph(Ex x, const char* op) const;

  GraphOptions options_;
  std::vector<Node> nodes_;
};

/// Per-parameter maximum relative error between analytic and central
/// finite-difference gradients.
struct GradCheckReport {
  std::vector<std::string> names;
  std::vector<double> max_rel_error;
  double worst = 0.0;
  bool passed = true;
};

/// Builds a scalar loss over `params` on a fresh graph. Called repeatedly by
/// grad_check, so it must be a pure function of the parameter values.
using LossBuilder = std::function<Expr<double>(Graph<double>&)>;

/// Relative error per entry is |a − n| / max(|a|, |n|, 1e-2); the floor turns
/// the comparison absolute for near-zero gradients.
GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor<double>* const> params,
                           std::span<const std::string> names, double step = 1e-3,
                           double tol = 1e-4);

/// Scales all grads by max_norm / g when the global L2 norm g exceeds
/// max_norm. Returns the pre-clip norm.
template <typename Real>
double clip_global_norm(std::span<Tensor<Real>* const> tensors, double max_norm);

template <typename Real>
double global_grad_norm(std::span<Tensor<Real>* const> tensors);

// Expression sugar.

template <typename Real>
std::size_t Expr<Real>::rows() const {
  const auto& s = shape();
  return s.size() < 2 ? 1 : s[0];
}

template <typename Real>
std::size_t Expr<Real>::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : shape_size(s) / rows();
}

template <typename Real>
Expr<Real> operator+(Expr<Real> a, Expr<Real> b) { return a.graph->add(a, b); }
template <typename Real>
Expr<Real> operator-(Expr<Real> a, Expr<Real> b) { return a.graph->sub(a, b); }
template <typename Real>
Expr<Real> operator*(Expr<Real> a, Expr<Real> b) { return a.graph->mul(a, b); }

template <typename Real>
Expr<Real> matmul(Expr<Real> a, Expr<Real> b) { return a.graph->matmul(a, b); }
template <typename Real>
Expr<Real> matmul_nt(Expr<Real> a, Expr<Real> b) { return a.graph->matmul_nt(a, b); }
template <typename Real>
Expr<Real> add_bias(Expr<Real> x, Expr<Real> b) { return x.graph->add_bias(x, b); }
template <typename Real>
Expr<Real> scale_rows(Expr<Real> w, Expr<Real> x) { return x.graph->scale_rows(w, x); }
template <typename Real>
Expr<Real> tanh(Expr<Real> x) { return x.graph->tanh(x); }
template <typename Real>
Expr<Real> sigmoid(Expr<Real> x) { return x.graph->sigmoid(x); }
template <typename Real>
Expr<Real> softmax(Expr<Real> x) { return x.graph->softmax(x); }
template <typename Real>
Expr<Real> log_softmax(Expr<Real> x) { return x.graph->log_softmax(x); }
template <typename Real>
Expr<Real> sum(Expr<Real> x) { return x.graph->sum(x); }
template <typename Real>
Expr<Real> one_minus(Expr<Real> x) { return x.graph->affine(x, Real(-1), Real(1)); }

}  // namespace knmt
