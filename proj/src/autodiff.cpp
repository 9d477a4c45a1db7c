#include "knmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace knmt {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::ScaleRows: return "scale_rows";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Sum: return "sum";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::MeanCols: return "mean_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
  }
  return "unknown";
}

namespace {

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims dims_of(const Shape& s) {
  const std::size_t n = shape_size(s);
  const std::size_t r = s.size() < 2 ? 1 : s[0];
  return {r, r == 0 ? 0 : n / r};
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

}  // namespace

template <typename Real>
const Real* Graph<Real>::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->data.data() : n.value.data();
}

template <typename Real>
Real* Graph<Real>::acc(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.param) {
    n.param->ensure_grad();
    return n.param->grad.data();
  }
  if (n.grad.empty()) n.grad.assign(shape_size(n.shape), Real(0));
  return n.grad.data();
}

template <typename Real>
std::span<const Real> Graph<Real>::value(Ex x) const {
  return {val(x.id), shape_size(nodes_[x.id].shape)};
}

template <typename Real>
std::span<const Real> Graph<Real>::grad(Ex x) const {
  const Node& n = nodes_[x.id];
  if (n.param) return n.param->grad;
  return n.grad;
}

template <typename Real>
Tensor<Real> Graph<Real>::tensor(Ex x) const {
  auto v = value(x);
  return Tensor<Real>(nodes_[x.id].shape, std::vector<Real>(v.begin(), v.end()));
}

template <typename Real>
void Graph<Real>::check_graph(Ex x, const char* op) const {
  if (x.graph != this || x.id >= nodes_.size()) {
    throw ContractError(std::string(op) + ": expression does not belong to this graph");
  }
}

template <typename Real>
Expr<Real> Graph<Real>::emit(const char* op, Shape shape, std::vector<Real> value,
                             bool requires_grad,
                             std::function<void(Graph&, std::uint32_t)> backward) {
  if (options_.checked) {
    for (const Real v : value) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(op) + ": non-finite output of shape " + shape_str(shape));
      }
    }
  }
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.requires_grad = requires_grad && options_.grad_enabled;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Ex{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Expr<Real> Graph<Real>::constant(Tensor<Real> value) {
  Node node;
  node.shape = std::move(value.shape);
  node.value = std::move(value.data);
  nodes_.push_back(std::move(node));
  return Ex{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Expr<Real> Graph<Real>::constant(Shape shape, std::vector<Real> values) {
  return constant(Tensor<Real>(std::move(shape), std::move(values)));
}

template <typename Real>
Expr<Real> Graph<Real>::parameter(Tensor<Real>& param) {
  if (shape_size(param.shape) != param.data.size()) {
    throw DimensionError("parameter: shape " + shape_str(param.shape) + " does not match data");
  }
  Node node;
  node.shape = param.shape;
  node.param = &param;
  node.requires_grad = param.requires_grad && options_.grad_enabled;
  nodes_.push_back(std::move(node));
  return Ex{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
void Graph<Real>::backward(Ex loss) {
  check_graph(loss, "backward");
  if (shape_size(nodes_[loss.id].shape) != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(nodes_[loss.id].shape));
  }
  if (!nodes_[loss.id].requires_grad) return;
  acc(loss.id)[0] += Real(1);
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

template <typename Real>
Expr<Real> Graph<Real>::forward_op(OpKind kind, std::span<const Ex> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(op_name(kind) + ": expected " + std::to_string(n) + " inputs, got " +
                          std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::MatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::MatMulNT: need(2); return matmul_nt(in[0], in[1]);
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Sub: need(2); return sub(in[0], in[1]);
    case OpKind::Mul: need(2); return mul(in[0], in[1]);
    case OpKind::AddBias: need(2); return add_bias(in[0], in[1]);
    case OpKind::ScaleRows: need(2); return scale_rows(in[0], in[1]);
    case OpKind::Tanh: need(1); return tanh(in[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::Softmax: need(1); return softmax(in[0]);
    case OpKind::LogSoftmax: need(1); return log_softmax(in[0]);
    case OpKind::Sum: need(1); return sum(in[0]);
    case OpKind::MeanRows: need(1); return mean(in[0], 0);
    case OpKind::MeanCols: need(1); return mean(in[0], 1);
    case OpKind::ConcatCols: return concat(in, 1);
    case OpKind::ConcatRows: return concat(in, 0);
  }
  throw ContractError("forward_op: unknown op");
}

template <typename Real>
Expr<Real> Graph<Real>::matmul(Ex a, Ex b) {
  check_graph(a, "matmul");
  check_graph(b, "matmul");
  const Dims da = dims_of(shape(a)), db = dims_of(shape(b));
  if (da.cols != db.rows) shape_error("matmul", shape(a), shape(b));
  const std::size_t m = da.rows, k = da.cols, n = db.cols;
  std::vector<Real> y(m * n, Real(0));
  const Real* A = val(a.id);
  const Real* B = val(b.id);
  for (std::size_t i = 0; i < m; ++i) {
    Real* yi = y.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = A[i * k + p];
      const Real* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) yi[j] += aip * bp[j];
    }
  }
  const std::uint32_t ia = a.id, ib = b.id;
  const bool ga_on = needs_grad(a), gb_on = needs_grad(b);
  return emit("matmul", {m, n}, std::move(y), ga_on || gb_on,
              [=](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                const Real* A = g.val(ia);
                const Real* B = g.val(ib);
                if (ga_on) {
                  Real* ga = g.acc(ia);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      Real s = 0;
                      const Real* bp = B + p * n;
                      const Real* gyi = gy + i * n;
                      for (std::size_t j = 0; j < n; ++j) s += gyi[j] * bp[j];
                      ga[i * k + p] += s;
                    }
                }
                if (gb_on) {
                  Real* gb = g.acc(ib);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const Real aip = A[i * k + p];
                      Real* gbp = gb + p * n;
                      const Real* gyi = gy + i * n;
                      for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gyi[j];
                    }
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::matmul_nt(Ex a, Ex b) {
  check_graph(a, "matmul_nt");
  check_graph(b, "matmul_nt");
  const Dims da = dims_of(shape(a)), db = dims_of(shape(b));
  if (da.cols != db.cols) shape_error("matmul_nt", shape(a), shape(b));
  const std::size_t m = da.rows, k = da.cols, n = db.rows;
  std::vector<Real> y(m * n);
  const Real* A = val(a.id);
  const Real* B = val(b.id);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      const Real* ai = A + i * k;
      const Real* bj = B + j * k;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      y[i * n + j] = s;
    }
  const std::uint32_t ia = a.id, ib = b.id;
  const bool ga_on = needs_grad(a), gb_on = needs_grad(b);
  return emit("matmul_nt", {m, n}, std::move(y), ga_on || gb_on,
              [=](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                const Real* A = g.val(ia);
                const Real* B = g.val(ib);
                if (ga_on) {
                  Real* ga = g.acc(ia);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const Real gij = gy[i * n + j];
                      if (gij == Real(0)) continue;
                      const Real* bj = B + j * k;
                      Real* gai = ga + i * k;
                      for (std::size_t p = 0; p < k; ++p) gai[p] += gij * bj[p];
                    }
                }
                if (gb_on) {
                  Real* gb = g.acc(ib);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const Real gij = gy[i * n + j];
                      if (gij == Real(0)) continue;
                      const Real* ai = A + i * k;
                      Real* gbj = gb + j * k;
                      for (std::size_t p = 0; p < k; ++p) gbj[p] += gij * ai[p];
                    }
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::add(Ex a, Ex b) {
  check_graph(a, "add");
  check_graph(b, "add");
  if (shape(a) != shape(b)) shape_error("add", shape(a), shape(b));
  const std::size_t n = shape_size(shape(a));
  std::vector<Real> y(n);
  const Real* A = val(a.id);
  const Real* B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) y[i] = A[i] + B[i];
  const std::uint32_t ia = a.id, ib = b.id;
  const bool ga_on = needs_grad(a), gb_on = needs_grad(b);
  return emit("add", shape(a), std::move(y), ga_on || gb_on, [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    if (ga_on) {
      Real* ga = g.acc(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
    }
    if (gb_on) {
      Real* gb = g.acc(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i];
    }
  });
}

template <typename Real>
Expr<Real> Graph<Real>::sub(Ex a, Ex b) {
  check_graph(a, "sub");
  check_graph(b, "sub");
  if (shape(a) != shape(b)) shape_error("sub", shape(a), shape(b));
  const std::size_t n = shape_size(shape(a));
  std::vector<Real> y(n);
  const Real* A = val(a.id);
  const Real* B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) y[i] = A[i] - B[i];
  const std::uint32_t ia = a.id, ib = b.id;
  const bool ga_on = needs_grad(a), gb_on = needs_grad(b);
  return emit("sub", shape(a), std::move(y), ga_on || gb_on, [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    if (ga_on) {
      Real* ga = g.acc(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
    }
    if (gb_on) {
      Real* gb = g.acc(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i] -= gy[i];
    }
  });
}

template <typename Real>
Expr<Real> Graph<Real>::mul(Ex a, Ex b) {
  check_graph(a, "mul");
  check_graph(b, "mul");
  if (shape(a) != shape(b)) shape_error("mul", shape(a), shape(b));
  const std::size_t n = shape_size(shape(a));
  std::vector<Real> y(n);
  const Real* A = val(a.id);
  const Real* B = val(b.id);
  for (std::size_t i = 0; i < n; ++i) y[i] = A[i] * B[i];
  const std::uint32_t ia = a.id, ib = b.id;
  const bool ga_on = needs_grad(a), gb_on = needs_grad(b);
  return emit("mul", shape(a), std::move(y), ga_on || gb_on, [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    const Real* A = g.val(ia);
    const Real* B = g.val(ib);
    if (ga_on) {
      Real* ga = g.acc(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * B[i];
    }
    if (gb_on) {
      Real* gb = g.acc(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i] * A[i];
    }
  });
}

template <typename Real>
Expr<Real> Graph<Real>::add_bias(Ex x, Ex bias) {
  check_graph(x, "add_bias");
  check_graph(bias, "add_bias");
  const Dims dx = dims_of(shape(x));
  if (shape_size(shape(bias)) != dx.cols) shape_error("add_bias", shape(x), shape(bias));
  const std::size_t m = dx.rows, n = dx.cols;
  std::vector<Real> y(m * n);
  const Real* X = val(x.id);
  const Real* B = val(bias.id);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = X[i * n + j] + B[j];
  const std::uint32_t ix = x.id, ib = bias.id;
  const bool gx_on = needs_grad(x), gb_on = needs_grad(bias);
  return emit("add_bias", shape(x), std::move(y), gx_on || gb_on,
              [=](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                if (gx_on) {
                  Real* gx = g.acc(ix);
                  for (std::size_t i = 0; i < m * n; ++i) gx[i] += gy[i];
                }
                if (gb_on) {
                  Real* gb = g.acc(ib);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gy[i * n + j];
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::scale_rows(Ex w, Ex x) {
  check_graph(w, "scale_rows");
  check_graph(x, "scale_rows");
  const Dims dx = dims_of(shape(x));
  if (shape_size(shape(w)) != dx.rows) shape_error("scale_rows", shape(w), shape(x));
  const std::size_t m = dx.rows, n = dx.cols;
  std::vector<Real> y(m * n);
  const Real* W = val(w.id);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = W[i] * X[i * n + j];
  const std::uint32_t iw = w.id, ix = x.id;
  const bool gw_on = needs_grad(w), gx_on = needs_grad(x);
  return emit("scale_rows", shape(x), std::move(y), gw_on || gx_on,
              [=](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                const Real* W = g.val(iw);
                const Real* X = g.val(ix);
                if (gw_on) {
                  Real* gw = g.acc(iw);
                  for (std::size_t i = 0; i < m; ++i) {
                    Real s = 0;
                    for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * X[i * n + j];
                    gw[i] += s;
                  }
                }
                if (gx_on) {
                  Real* gx = g.acc(ix);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] * W[i];
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::affine(Ex x, Real scale, Real shift) {
  check_graph(x, "affine");
  const std::size_t n = shape_size(shape(x));
  std::vector<Real> y(n);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < n; ++i) y[i] = scale * X[i] + shift;
  const std::uint32_t ix = x.id;
  return emit("affine", shape(x), std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i] += scale * gy[i];
  });
}

template <typename Real>
Expr<Real> Graph<Real>::tanh(Ex x) {
  check_graph(x, "tanh");
  const std::size_t n = shape_size(shape(x));
  std::vector<Real> y(n);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(X[i]);
  const std::uint32_t ix = x.id;
  return emit("tanh", shape(x), std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    const Real* Y = g.nodes_[self].value.data();
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (Real(1) - Y[i] * Y[i]);
  });
}

template <typename Real>
Expr<Real> Graph<Real>::sigmoid(Ex x) {
  check_graph(x, "sigmoid");
  const std::size_t n = shape_size(shape(x));
  std::vector<Real> y(n);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < n; ++i) {
    // Split by sign so exp never overflows.
    if (X[i] >= 0) {
      y[i] = Real(1) / (Real(1) + std::exp(-X[i]));
    } else {
      const Real e = std::exp(X[i]);
      y[i] = e / (Real(1) + e);
    }
  }
  const std::uint32_t ix = x.id;
  return emit("sigmoid", shape(x), std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    const Real* Y = g.nodes_[self].value.data();
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * Y[i] * (Real(1) - Y[i]);
  });
}

template <typename Real>
Expr<Real> Graph<Real>::softmax(Ex x) {
  check_graph(x, "softmax");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  std::vector<Real> y(m * n);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* xi = X + i * n;
    Real* yi = y.data() + i * n;
    const Real mx = *std::max_element(xi, xi + n);
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (yi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
  }
  const std::uint32_t ix = x.id;
  return emit("softmax", shape(x), std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    const Real* Y = g.nodes_[self].value.data();
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < m; ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += Y[i * n + j] * (gy[i * n + j] - dot);
    }
  });
}

template <typename Real>
Expr<Real> Graph<Real>::log_softmax(Ex x) {
  check_graph(x, "log_softmax");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  std::vector<Real> y(m * n);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* xi = X + i * n;
    Real* yi = y.data() + i * n;
    const Real mx = *std::max_element(xi, xi + n);
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xi[j] - mx);
    const Real lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) yi[j] = xi[j] - lz;
  }
  const std::uint32_t ix = x.id;
  return emit("log_softmax", shape(x), std::move(y), needs_grad(x),
              [=](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                const Real* Y = g.nodes_[self].value.data();
                Real* gx = g.acc(ix);
                for (std::size_t i = 0; i < m; ++i) {
                  Real total = 0;
                  for (std::size_t j = 0; j < n; ++j) total += gy[i * n + j];
                  for (std::size_t j = 0; j < n; ++j)
                    gx[i * n + j] += gy[i * n + j] - std::exp(Y[i * n + j]) * total;
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::sum(Ex x) {
  check_graph(x, "sum");
  const std::size_t n = shape_size(shape(x));
  const Real* X = val(x.id);
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += X[i];
  const std::uint32_t ix = x.id;
  return emit("sum", {1}, {s}, needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real gy = g.nodes_[self].grad[0];
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy;
  });
}

template <typename Real>
Expr<Real> Graph<Real>::mean(Ex x, int axis) {
  check_graph(x, "mean");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  const Real* X = val(x.id);
  const std::uint32_t ix = x.id;
  if (axis == 0) {
    std::vector<Real> y(n, Real(0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[j] += X[i * n + j];
    for (auto& v : y) v /= static_cast<Real>(m);
    return emit("mean", {1, n}, std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
      const Real* gy = g.nodes_[self].grad.data();
      Real* gx = g.acc(ix);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j] / static_cast<Real>(m);
    });
  }
  if (axis == 1) {
    std::vector<Real> y(m, Real(0));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[i] += X[i * n + j];
      y[i] /= static_cast<Real>(n);
    }
    return emit("mean", {m, 1}, std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
      const Real* gy = g.nodes_[self].grad.data();
      Real* gx = g.acc(ix);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i] / static_cast<Real>(n);
    });
  }
  throw DimensionError("mean: axis must be 0 or 1, got " + std::to_string(axis));
}

template <typename Real>
Expr<Real> Graph<Real>::concat(std::span<const Ex> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  for (const auto& p : parts) check_graph(p, "concat");
  if (axis != 0 && axis != 1) {
    throw DimensionError("concat: axis must be 0 or 1, got " + std::to_string(axis));
  }
  std::vector<Dims> ds;
  for (const auto& p : parts) ds.push_back(dims_of(shape(p)));
  std::vector<std::uint32_t> ids;
  std::vector<bool> on;
  bool any = false;
  for (const auto& p : parts) {
    ids.push_back(p.id);
    on.push_back(needs_grad(p));
    any = any || on.back();
  }
  if (axis == 1) {
    const std::size_t m = ds[0].rows;
    std::size_t total = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (ds[k].rows != m) shape_error("concat", shape(parts[0]), shape(parts[k]));
      total += ds[k].cols;
    }
    std::vector<Real> y(m * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Real* X = val(ids[k]);
      const std::size_t c = ds[k].cols;
      for (std::size_t i = 0; i < m; ++i)
        std::copy(X + i * c, X + (i + 1) * c, y.begin() + static_cast<std::ptrdiff_t>(i * total + off));
      off += c;
    }
    return emit("concat", {m, total}, std::move(y), any, [=](Graph& g, std::uint32_t self) {
      const Real* gy = g.nodes_[self].grad.data();
      std::size_t off = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::size_t c = ds[k].cols;
        if (on[k]) {
          Real* gx = g.acc(ids[k]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[i * total + off + j];
        }
        off += c;
      }
    });
  }
  const std::size_t n = ds[0].cols;
  std::size_t total = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (ds[k].cols != n) shape_error("concat", shape(parts[0]), shape(parts[k]));
    total += ds[k].rows;
  }
  std::vector<Real> y;
  y.reserve(total * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Real* X = val(ids[k]);
    y.insert(y.end(), X, X + ds[k].rows * n);
  }
  return emit("concat", {total, n}, std::move(y), any, [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t len = ds[k].rows * n;
      if (on[k]) {
        Real* gx = g.acc(ids[k]);
        for (std::size_t i = 0; i < len; ++i) gx[i] += gy[off + i];
      }
      off += len;
    }
  });
}

template <typename Real>
Expr<Real> Graph<Real>::slice(Ex x, int axis, std::size_t begin, std::size_t end) {
  check_graph(x, "slice");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  const std::size_t extent = axis == 0 ? m : n;
  if ((axis != 0 && axis != 1) || begin >= end || end > extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_str(shape(x)) + " on axis " +
                         std::to_string(axis));
  }
  const Real* X = val(x.id);
  const std::uint32_t ix = x.id;
  const std::size_t w = end - begin;
  if (axis == 0) {
    std::vector<Real> y(X + begin * n, X + end * n);
    return emit("slice", {w, n}, std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
      const Real* gy = g.nodes_[self].grad.data();
      Real* gx = g.acc(ix) + begin * n;
      for (std::size_t i = 0; i < w * n; ++i) gx[i] += gy[i];
    });
  }
  std::vector<Real> y(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = X[i * n + begin + j];
  return emit("slice", {m, w}, std::move(y), needs_grad(x), [=](Graph& g, std::uint32_t self) {
    const Real* gy = g.nodes_[self].grad.data();
    Real* gx = g.acc(ix);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += gy[i * w + j];
  });
}

template <typename Real>
Expr<Real> Graph<Real>::lookup(Ex table, std::span<const int> ids) {
  check_graph(table, "lookup");
  const Dims d = dims_of(shape(table));
  const std::size_t vocab = d.rows, dim = d.cols;
  std::vector<Real> y(ids.size() * dim);
  const Real* T = val(table.id);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw VocabularyError("lookup: id " + std::to_string(ids[r]) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
    std::copy(T + static_cast<std::size_t>(ids[r]) * dim,
              T + static_cast<std::size_t>(ids[r] + 1) * dim,
              y.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  const std::uint32_t it = table.id;
  std::vector<int> rows(ids.begin(), ids.end());
  return emit("lookup", {ids.size(), dim}, std::move(y), needs_grad(table),
              [=, rows = std::move(rows)](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                Real* gt = g.acc(it);
                for (std::size_t r = 0; r < rows.size(); ++r) {
                  Real* dst = gt + static_cast<std::size_t>(rows[r]) * dim;
                  for (std::size_t j = 0; j < dim; ++j) dst[j] += gy[r * dim + j];
                }
              });
}

template <typename Real>
Expr<Real> Graph<Real>::pick(Ex x, std::span<const int> ids) {
  check_graph(x, "pick");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  if (ids.size() != m) {
    throw DimensionError("pick: " + std::to_string(ids.size()) + " indices for shape " +
                         shape_str(shape(x)));
  }
  std::vector<Real> y(m);
  const Real* X = val(x.id);
  for (std::size_t i = 0; i < m; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n) {
      throw VocabularyError("pick: index " + std::to_string(ids[i]) + " outside " +
                            std::to_string(n) + " columns");
    }
    y[i] = X[i * n + static_cast<std::size_t>(ids[i])];
  }
  const std::uint32_t ix = x.id;
  std::vector<int> cols(ids.begin(), ids.end());
  return emit("pick", {m, 1}, std::move(y), needs_grad(x),
              [=, cols = std::move(cols)](Graph& g, std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                Real* gx = g.acc(ix);
                for (std::size_t i = 0; i < m; ++i)
                  gx[i * n + static_cast<std::size_t>(cols[i])] += gy[i];
              });
}

template <typename Real>
Expr<Real> Graph<Real>::layer_norm(Ex x, Ex gain, Ex bias, Real epsilon) {
  check_graph(x, "layer_norm");
  check_graph(gain, "layer_norm");
  check_graph(bias, "layer_norm");
  const Dims d = dims_of(shape(x));
  const std::size_t m = d.rows, n = d.cols;
  if (shape_size(shape(gain)) != n) shape_error("layer_norm", shape(x), shape(gain));
  if (shape_size(shape(bias)) != n) shape_error("layer_norm", shape(x), shape(bias));
  const Real* X = val(x.id);
  const Real* G = val(gain.id);
  const Real* B = val(bias.id);
  std::vector<Real> y(m * n), xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Moments in double: a constant row then standardizes to exactly zero.
    double mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = X[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    inv_std[i] = static_cast<Real>(inv);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = static_cast<Real>((X[i * n + j] - mu) * inv);
      y[i * n + j] = G[j] * xhat[i * n + j] + B[j];
    }
  }
  const std::uint32_t ix = x.id, ig = gain.id, ib = bias.id;
  const bool gx_on = needs_grad(x), gg_on = needs_grad(gain), gb_on = needs_grad(bias);
  return emit("layer_norm", shape(x), std::move(y), gx_on || gg_on || gb_on,
              [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                          std::uint32_t self) {
                const Real* gy = g.nodes_[self].grad.data();
                const Real* G = g.val(ig);
                if (gb_on) {
                  Real* gb = g.acc(ib);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gy[i * n + j];
                }
                if (gg_on) {
                  Real* gg = g.acc(ig);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gg[j] += gy[i * n + j] * xhat[i * n + j];
                }
                if (gx_on) {
                  Real* gx = g.acc(ix);
                  for (std::size_t i = 0; i < m; ++i) {
                    double mean_g = 0, mean_gx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double gh = static_cast<double>(gy[i * n + j]) * G[j];
                      mean_g += gh;
                      mean_gx += gh * xhat[i * n + j];
                    }
                    mean_g /= static_cast<double>(n);
                    mean_gx /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                      const double gh = static_cast<double>(gy[i * n + j]) * G[j];
                      gx[i * n + j] += static_cast<Real>(
                          inv_std[i] * (gh - mean_g - xhat[i * n + j] * mean_gx));
                    }
                  }
                }
              });
}

GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor<double>* const> params,
                           std::span<const std::string> names, double step, double tol) {
  GradCheckReport report;
  for (auto* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Graph<double> g;
    auto loss = build(g);
    g.backward(loss);
  }
  auto eval = [&] {
    Graph<double> g(GraphOptions{.checked = false, .grad_enabled = false});
    return build(g).value()[0];
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    const std::vector<double> analytic = p.grad.empty() ? std::vector<double>(p.size(), 0.0) : p.grad;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + step;
      const double up = eval();
      p.data[i] = orig - step;
      const double down = eval();
      p.data[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-2});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    report.names.push_back(k < names.size() ? names[k] : "param" + std::to_string(k));
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst <= tol;
  return report;
}

template <typename Real>
double global_grad_norm(std::span<Tensor<Real>* const> tensors) {
  double sq = 0.0;
  for (const auto* t : tensors)
    for (const Real g : t->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

template <typename Real>
double clip_global_norm(std::span<Tensor<Real>* const> tensors, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(tensors);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* t : tensors)
      for (Real& g : t->grad) g = static_cast<Real>(static_cast<double>(g) * scale);
  }
  return norm;
}

template class Graph<float>;
template class Graph<double>;
template double global_grad_norm<float>(std::span<Tensor<float>* const>);
template double global_grad_norm<double>(std::span<Tensor<double>* const>);
template double clip_global_norm<float>(std::span<Tensor<float>* const>, double);
template double clip_global_norm<double>(std::span<Tensor<double>* const>, double);

}  // namespace knmt
