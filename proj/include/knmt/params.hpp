#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "knmt/rng.hpp"
#include "knmt/tensor.hpp"

namespace knmt {

/// Named, insertion-ordered parameter store.
///
/// An alias is a second name for an existing tensor (same storage). Tied
/// embeddings are expressed this way, so updates through either name are
/// visible through both.
template <typename Real>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Tensor<Real>& add(const std::string& name, Shape shape);
  void alias(const std::string& name, const std::string& target);

  Tensor<Real>& get(const std::string& name);
  const Tensor<Real>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  /// Canonical (non-alias) names in insertion order.
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::pair<std::string, std::string>>& aliases() const { return aliases_; }
  /// Distinct tensors in insertion order.
  std::vector<Tensor<Real>*> tensors();
  std::vector<const Tensor<Real>*> tensors() const;

  /// Number of distinct scalar parameters; aliases are not counted twice.
  std::size_t count() const;
  void zero_grad();

  /// Xavier/Glorot uniform on matrices (limit √(6/(fan_in+fan_out))). Rank-1
  /// tensors are biases (zeros) except names ending in ".gain" (ones).
  void xavier_init(Rng& rng);
  /// Copies values from a store with identical layout.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Tensor<Real>>> storage_;
  std::vector<std::pair<std::string, std::string>> aliases_;
  std::map<std::string, Tensor<Real>*> index_;
};

/// Serialized tensor section shared by checkpoint formats:
///   tensors N, then N lines "tensor name f32|f64 rank d0 d1 ..."
///   aliases M, then M lines "alias name target"
///   data, then raw little-endian payloads in tensor order
template <typename Real>
void write_parameter_block(std::ostream& out, const ParameterSet<Real>& ps);

/// Fills an already-registered set; LoadError prefixed with `what` on any
/// name, shape, alias or payload mismatch. Either precision is accepted.
template <typename Real>
void read_parameter_block(std::istream& in, ParameterSet<Real>& ps, const std::string& what);

}  // namespace knmt
