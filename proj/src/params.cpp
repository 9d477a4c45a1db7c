#include "knmt/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "knmt/error.hpp"

namespace knmt {

template <typename Real>
Tensor<Real>& ParameterSet<Real>::add(const std::string& name, Shape shape) {
  if (contains(name)) throw ContractError("parameter '" + name + "' already exists");
  auto t = std::make_unique<Tensor<Real>>(std::move(shape));
  t->requires_grad = true;
  Tensor<Real>& ref = *t;
  index_[name] = t.get();
  names_.push_back(name);
  storage_.push_back(std::move(t));
  return ref;
}

template <typename Real>
void ParameterSet<Real>::alias(const std::string& name, const std::string& target) {
  if (contains(name)) throw ContractError("parameter '" + name + "' already exists");
  index_[name] = &get(target);
  aliases_.emplace_back(name, target);
}

template <typename Real>
Tensor<Real>& ParameterSet<Real>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *it->second;
}

template <typename Real>
const Tensor<Real>& ParameterSet<Real>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return *it->second;
}

template <typename Real>
std::vector<Tensor<Real>*> ParameterSet<Real>::tensors() {
  std::vector<Tensor<Real>*> out;
  for (auto& t : storage_) out.push_back(t.get());
  return out;
}

template <typename Real>
std::vector<const Tensor<Real>*> ParameterSet<Real>::tensors() const {
  std::vector<const Tensor<Real>*> out;
  for (const auto& t : storage_) out.push_back(t.get());
  return out;
}

template <typename Real>
std::size_t ParameterSet<Real>::count() const {
  std::size_t n = 0;
  for (const auto& t : storage_) n += t->size();
  return n;
}

template <typename Real>
void ParameterSet<Real>::zero_grad() {
  for (auto& t : storage_) t->zero_grad();
}

template <typename Real>
void ParameterSet<Real>::xavier_init(Rng& rng) {
  for (std::size_t i = 0; i < storage_.size(); ++i) {
    auto& t = storage_[i];
    if (t->shape.size() < 2) {
      const bool gain = names_[i].size() >= 5 && names_[i].ends_with(".gain");
      std::fill(t->data.begin(), t->data.end(), gain ? Real(1) : Real(0));
      continue;
    }
    const double fan_in = static_cast<double>(t->shape[0]);
    const double fan_out = static_cast<double>(t->shape[1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t->data) v = static_cast<Real>(rng.uniform(-limit, limit));
  }
}

template <typename Real>
void ParameterSet<Real>::copy_values_from(const ParameterSet& other) {
  if (other.names_ != names_) throw ContractError("copy_values_from: parameter layouts differ");
  for (std::size_t i = 0; i < storage_.size(); ++i) {
    if (storage_[i]->shape != other.storage_[i]->shape) {
      throw DimensionError("copy_values_from: shape mismatch for '" + names_[i] + "'");
    }
    storage_[i]->data = other.storage_[i]->data;
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

namespace {

template <typename T>
void write_le(std::ostream& out, const std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
  } else {
    for (T v : values) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (std::size_t i = sizeof(T); i-- > 0;) out.put(bytes[i]);
    }
  }
}

template <typename T>
bool read_le(std::istream& in, std::vector<T>& values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != values.size() * sizeof(T)) return false;
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : values) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      std::reverse(bytes, bytes + sizeof(T));
      std::memcpy(&v, bytes, sizeof(T));
    }
  }
  return true;
}

std::vector<std::string> expect_words(std::istream& in, const std::string& what,
                                      const std::string& field, const std::string& keyword) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(what + ": truncated before " + field);
  std::vector<std::string> words;
  std::istringstream is(line);
  for (std::string w; is >> w;) words.push_back(w);
  if (words.empty() || words[0] != keyword) {
    throw LoadError(what + ": expected '" + keyword + "' line for " + field);
  }
  return words;
}

}  // namespace

template <typename Real>
void write_parameter_block(std::ostream& out, const ParameterSet<Real>& ps) {
  const auto& names = ps.names();
  out << "tensors " << names.size() << '\n';
  const char* precision = sizeof(Real) == 4 ? "f32" : "f64";
  for (const auto& name : names) {
    const auto& t = ps.get(name);
    out << "tensor " << name << ' ' << precision << ' ' << t.shape.size();
    for (const auto d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << "aliases " << ps.aliases().size() << '\n';
  for (const auto& [name, target] : ps.aliases()) out << "alias " << name << ' ' << target << '\n';
  out << "data\n";
  for (const auto& name : names) write_le(out, ps.get(name).data);
}

template <typename Real>
void read_parameter_block(std::istream& in, ParameterSet<Real>& ps, const std::string& what) {
  const auto th = expect_words(in, what, "tensor list", "tensors");
  const auto& names = ps.names();
  if (th.size() != 2 || th[1] != std::to_string(names.size())) {
    throw LoadError(what + ": tensors count does not match configuration (expected " +
                    std::to_string(names.size()) + ")");
  }
  std::vector<bool> wide(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto w = expect_words(in, what, "tensor " + names[i], "tensor");
    if (w.size() < 4 || w[1] != names[i]) {
      throw LoadError(what + ": tensor " + std::to_string(i) + " should be '" + names[i] + "'");
    }
    if (w[2] != "f32" && w[2] != "f64") {
      throw LoadError(what + ": tensor '" + names[i] + "' has unknown precision '" + w[2] + "'");
    }
    wide[i] = w[2] == "f64";
    Shape shape;
    for (std::size_t k = 4; k < w.size(); ++k) shape.push_back(std::stoull(w[k]));
    const auto& expected = ps.get(names[i]).shape;
    if (w[3] != std::to_string(shape.size()) || shape != expected) {
      throw LoadError(what + ": tensor '" + names[i] + "' shape " + shape_str(shape) +
                      " does not match configuration " + shape_str(expected));
    }
  }
  const auto ah = expect_words(in, what, "alias list", "aliases");
  const auto& aliases = ps.aliases();
  if (ah.size() != 2 || ah[1] != std::to_string(aliases.size())) {
    throw LoadError(what + ": aliases count does not match configuration");
  }
  for (const auto& [name, target] : aliases) {
    const auto w = expect_words(in, what, "alias " + name, "alias");
    if (w.size() != 3 || w[1] != name || w[2] != target) {
      throw LoadError(what + ": alias '" + name + "' should point to '" + target + "'");
    }
  }
  expect_words(in, what, "data", "data");
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto& t = ps.get(names[i]);
    bool ok = false;
    if (wide[i] == (sizeof(Real) == 8)) {
      ok = read_le(in, t.data);
    } else if (wide[i]) {
      std::vector<double> buf(t.data.size());
      ok = read_le(in, buf);
      for (std::size_t k = 0; k < buf.size(); ++k) t.data[k] = static_cast<Real>(buf[k]);
    } else {
      std::vector<float> buf(t.data.size());
      ok = read_le(in, buf);
      for (std::size_t k = 0; k < buf.size(); ++k) t.data[k] = static_cast<Real>(buf[k]);
    }
    if (!ok) throw LoadError(what + ": truncated payload for tensor '" + names[i] + "'");
  }
}

template void write_parameter_block<float>(std::ostream&, const ParameterSet<float>&);
template void write_parameter_block<double>(std::ostream&, const ParameterSet<double>&);
template void read_parameter_block<float>(std::istream&, ParameterSet<float>&, const std::string&);
template void read_parameter_block<double>(std::istream&, ParameterSet<double>&, const std::string&);

}  // namespace knmt
