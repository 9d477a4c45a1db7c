#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "knmt/error.hpp"

namespace knmt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// Parameters are Tensors with requires_grad set; graph leaves created from
/// them accumulate gradients straight into `grad`.
template <typename Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0))
      : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
  }

  std::size_t size() const { return data.size(); }
  // Rank-1 tensors are viewed as a single row.
  std::size_t rows() const { return shape.size() < 2 ? 1 : shape.front(); }
  std::size_t cols() const { return shape.empty() ? 1 : data.size() / rows(); }

  void zero_grad() {
    if (requires_grad) grad.assign(data.size(), Real(0));
  }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  }
};

}  // namespace knmt
