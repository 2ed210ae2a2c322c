// SPDX-License-Identifier: Apache-2.0
//
// Seeded random stream. One stream per training run; distribution objects
// are constructed per call so the mt19937_64 engine state is the entire
// stream state (checkpoints capture it exactly).

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "softrl/tensor.hpp"

namespace softrl {

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  double normal() {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }

  double uniform01() {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }

  Tensor normal(int r, int c) {
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor t(r, c);
    for (double& v : t.data) v = d(gen_);
    return t;
  }

  // Uniform on the open interval (0, 1); exact endpoints are resampled.
  Tensor uniform_open01(int r, int c) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Tensor t(r, c);
    for (double& v : t.data) {
      double u = d(gen_);
      while (u <= 0.0 || u >= 1.0) u = d(gen_);
      v = u;
    }
    return t;
  }

  Tensor uniform_sym(int r, int c) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor t(r, c);
    for (double& v : t.data) v = d(gen_);
    return t;
  }

  // Uniform integer in [0, n).
  std::uint64_t integer(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(gen_);
  }

  // Engine state as 64-bit words (via the standard text representation),
  // so checkpoints can persist and restore the stream exactly.
  std::vector<std::uint64_t> state_words() const {
    std::ostringstream os;
    os << gen_;
    std::istringstream is(os.str());
    std::vector<std::uint64_t> words;
    std::uint64_t w;
    while (is >> w) words.push_back(w);
    return words;
  }

  void restore_state(const std::vector<std::uint64_t>& words) {
    std::ostringstream os;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) os << ' ';
      os << words[i];
    }
    std::istringstream is(os.str());
    is >> gen_;
    if (is.fail()) throw std::runtime_error("RngStream: bad serialized state");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace softrl
