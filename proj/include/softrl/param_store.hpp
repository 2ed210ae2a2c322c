// SPDX-License-Identifier: Apache-2.0
//
// Named parameter tensors with paired gradient buffers and Adam state.
//
// A store is the unit of optimization: adam_step advances every parameter in
// the store with a shared step counter, and clip_parameters bounds every
// entry in the store. Networks that train independently (critics, value
// function, policy) live in separate stores.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/rng.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
  };

  Tensor* add(const std::string& name, Tensor init) {
    if (find(name) != nullptr)
      throw std::invalid_argument("parameter already exists: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.rows, init.cols);
    e.m = Tensor(init.rows, init.cols);
    e.v = Tensor(init.rows, init.cols);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return &entries_.back().value;
  }

  Entry* find(const std::string& name) {
    for (Entry& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  const Entry* find(const std::string& name) const {
    for (const Entry& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  Entry& at(const std::string& name) {
    Entry* e = find(name);
    if (e == nullptr) throw std::out_of_range("no parameter named " + name);
    return *e;
  }

  const Entry& at(const std::string& name) const {
    const Entry* e = find(name);
    if (e == nullptr) throw std::out_of_range("no parameter named " + name);
    return *e;
  }

  Tensor& value(const std::string& name) { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }
  const Tensor& value(const std::string& name) const { return at(name).value; }
  const Tensor& grad(const std::string& name) const { return at(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (Entry& e : entries_) e.grad.fill(0.0);
  }

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t t) { step_ = t; }

  std::int64_t& step_ref() { return step_; }

 private:
  std::vector<Entry> entries_;
  std::int64_t step_ = 0;

  friend void adam_step(ParameterStore&, const AdamConfig&);
};

// One Adam update over every parameter in the store, using the gradients
// currently held in the paired grad buffers. A non-finite gradient anywhere
// aborts before any parameter is touched. Gradients are zeroed afterwards
// and the shared step counter advances by one.
inline void adam_step(ParameterStore& store, const AdamConfig& cfg) {
  for (const ParameterStore::Entry& e : store.entries())
    if (!e.grad.all_finite())
      throw std::runtime_error("adam_step: non-finite gradient in " + e.name);
  store.step_ += 1;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (ParameterStore::Entry& e : store.entries()) {
    for (int i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    e.grad.fill(0.0);
  }
}

inline void adam_step(ParameterStore& store, double lr) {
  AdamConfig cfg;
  cfg.lr = lr;
  adam_step(store, cfg);
}

// Clamps selected parameters into [-bound, bound]; `select` is called with
// each parameter name.
template <typename NamePredicate>
void clip_parameters(ParameterStore& store, double bound, NamePredicate select) {
  if (!(bound > 0.0)) throw std::invalid_argument("clip_parameters: bound <= 0");
  for (ParameterStore::Entry& e : store.entries()) {
    if (!select(e.name)) continue;
    for (double& v : e.value.data) v = std::clamp(v, -bound, bound);
  }
}

inline void clip_parameters(ParameterStore& store, double bound) {
  clip_parameters(store, bound, [](const std::string&) { return true; });
}

// target <- (1 - tau) * target + tau * source, matched by parameter name.
inline void polyak_update(ParameterStore& target, const ParameterStore& source,
                          double tau) {
  for (ParameterStore::Entry& te : target.entries()) {
    const ParameterStore::Entry* se = source.find(te.name);
    if (se == nullptr)
      throw std::invalid_argument("polyak_update: source lacks " + te.name);
    if (!te.value.same_shape(se->value))
      throw std::invalid_argument("polyak_update: shape mismatch for " + te.name);
    for (int i = 0; i < te.value.size(); ++i)
      te.value[i] = (1.0 - tau) * te.value[i] + tau * se->value[i];
  }
}

// Copies values (not optimizer state), matched by name.
inline void copy_values(ParameterStore& target, const ParameterStore& source) {
  for (ParameterStore::Entry& te : target.entries()) {
    const ParameterStore::Entry* se = source.find(te.name);
    if (se == nullptr)
      throw std::invalid_argument("copy_values: source lacks " + te.name);
    te.value = se->value;
  }
}

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(int fan_in, int fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (double& v : w.data) v = limit * (2.0 * rng.uniform01() - 1.0);
  return w;
}

}  // namespace softrl
