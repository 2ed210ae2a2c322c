// SPDX-License-Identifier: Apache-2.0
//
// Uniform-replay transition store: a fixed-capacity ring that evicts the
// oldest record once full. Contents live in flat arrays so minibatches
// assemble straight into batch tensors.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "softrl/rng.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

struct Transition {
  Tensor state;       // 1 x ds
  Tensor action;      // 1 x da
  double reward = 0;
  Tensor next_state;  // 1 x ds
  bool done = false;
};

struct Batch {
  Tensor s;     // B x ds
  Tensor a;     // B x da
  Tensor r;     // B x 1
  Tensor s2;    // B x ds
  Tensor done;  // B x 1, entries 0 or 1
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
      : capacity_(capacity), ds_(state_dim), da_(action_dim) {
    if (capacity == 0) throw std::invalid_argument("replay: zero capacity");
    s_.resize(capacity * ds_);
    a_.resize(capacity * da_);
    s2_.resize(capacity * ds_);
    r_.resize(capacity);
    d_.resize(capacity);
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  int state_dim() const { return ds_; }
  int action_dim() const { return da_; }
  std::size_t cursor() const { return cursor_; }

  void push(const Transition& t) {
    if (t.state.size() != ds_ || t.next_state.size() != ds_ ||
        t.action.size() != da_)
      throw std::invalid_argument("replay: transition dimension mismatch");
    if (!std::isfinite(t.reward))
      throw std::invalid_argument("replay: non-finite reward");
    const std::size_t i = cursor_;
    for (int c = 0; c < ds_; ++c) s_[i * ds_ + c] = t.state[c];
    for (int c = 0; c < da_; ++c) a_[i * da_ + c] = t.action[c];
    for (int c = 0; c < ds_; ++c) s2_[i * ds_ + c] = t.next_state[c];
    r_[i] = t.reward;
    d_[i] = t.done ? 1 : 0;
    cursor_ = (cursor_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }

  // Logical index 0 is the oldest record currently held.
  Transition get(std::size_t logical) const {
    if (logical >= size_) throw std::out_of_range("replay: index past size");
    const std::size_t i =
        size_ < capacity_ ? logical : (cursor_ + logical) % capacity_;
    Transition t;
    t.state = Tensor(1, ds_);
    t.action = Tensor(1, da_);
    t.next_state = Tensor(1, ds_);
    for (int c = 0; c < ds_; ++c) t.state[c] = s_[i * ds_ + c];
    for (int c = 0; c < da_; ++c) t.action[c] = a_[i * da_ + c];
    for (int c = 0; c < ds_; ++c) t.next_state[c] = s2_[i * ds_ + c];
    t.reward = r_[i];
    t.done = d_[i] != 0;
    return t;
  }

  // Uniform with replacement over current contents.
  Batch sample(int batch_size, RngStream& rng) const {
    if (size_ == 0) throw std::logic_error("replay: sampling from empty buffer");
    Batch b;
    b.s = Tensor(batch_size, ds_);
    b.a = Tensor(batch_size, da_);
    b.r = Tensor(batch_size, 1);
    b.s2 = Tensor(batch_size, ds_);
    b.done = Tensor(batch_size, 1);
    for (int row = 0; row < batch_size; ++row) {
      const std::size_t i = rng.integer(size_);
      for (int c = 0; c < ds_; ++c) b.s.at(row, c) = s_[i * ds_ + c];
      for (int c = 0; c < da_; ++c) b.a.at(row, c) = a_[i * da_ + c];
      for (int c = 0; c < ds_; ++c) b.s2.at(row, c) = s2_[i * ds_ + c];
      b.r[row] = r_[i];
      b.done[row] = d_[i];
    }
    return b;
  }

  // Raw ring contents for checkpointing: slots [0, size) plus the cursor.
  const std::vector<double>& raw_states() const { return s_; }
  const std::vector<double>& raw_actions() const { return a_; }
  const std::vector<double>& raw_next_states() const { return s2_; }
  const std::vector<double>& raw_rewards() const { return r_; }
  const std::vector<std::uint8_t>& raw_dones() const { return d_; }

  void restore(std::size_t size, std::size_t cursor,
               const std::vector<double>& s, const std::vector<double>& a,
               const std::vector<double>& s2, const std::vector<double>& r,
               const std::vector<std::uint8_t>& d) {
    if (size > capacity_ || cursor > capacity_)
      throw std::invalid_argument("replay: restore out of range");
    if (s.size() < size * ds_ || a.size() < size * da_ ||
        s2.size() < size * ds_ || r.size() < size || d.size() < size)
      throw std::invalid_argument("replay: restore payload too short");
    size_ = size;
    cursor_ = cursor % capacity_;
    for (std::size_t i = 0; i < size; ++i) {
      for (int c = 0; c < ds_; ++c) s_[i * ds_ + c] = s[i * ds_ + c];
      for (int c = 0; c < da_; ++c) a_[i * da_ + c] = a[i * da_ + c];
      for (int c = 0; c < ds_; ++c) s2_[i * ds_ + c] = s2[i * ds_ + c];
      r_[i] = r[i];
      d_[i] = d[i];
    }
  }

 private:
  std::size_t capacity_;
  int ds_, da_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> s_, a_, s2_, r_;
  std::vector<std::uint8_t> d_;
};

}  // namespace softrl
