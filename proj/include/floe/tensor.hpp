#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "floe/error.hpp"

namespace floe {

/// Dense row-major tensor of doubles. All training math runs in double
/// precision; persisted artifacts downcast to float at the file boundary.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    t.dims = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
  }

  std::size_t numel() const { return data.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at2(std::size_t i, std::size_t j) { return data[i * dims[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * dims[1] + j]; }

  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * dims[1] + j) * dims[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * dims[1] + j) * dims[2] + k];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Ordered registry of named parameters, each paired with a gradient
/// accumulator of the same shape. Iteration order is registration order,
/// which fixes the optimizer update order and the serialization layout.
class ParamSet {
public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  std::size_t add(std::string name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.name = std::move(name);
    e.grad = Tensor::zeros(init.dims);
    e.value = std::move(init);
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  // Copy of all values, aligned with entry order; used for best-epoch snapshots.
  std::vector<Tensor> snapshot_values() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
  }

  void restore_values(const std::vector<Tensor>& snap) {
    if (snap.size() != entries_.size()) throw ConfigError("snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (!snap[i].same_shape(entries_[i].value)) throw ConfigError("snapshot shape mismatch");
      entries_[i].value = snap[i];
    }
  }

private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient sink aligned with a ParamSet's entries. The training loop keeps
// one per work chunk so threads never share an accumulator.
inline std::vector<Tensor> make_grad_buffer(const ParamSet& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(Tensor::zeros(ps[i].value.dims));
  return out;
}

inline void zero_grad_buffer(std::vector<Tensor>& buf) {
  for (auto& t : buf) t.fill(0.0);
}

inline void add_grad_buffer(std::vector<Tensor>& dst, const std::vector<Tensor>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < dst[i].data.size(); ++j) dst[i].data[j] += src[i].data[j];
}

} // namespace floe
