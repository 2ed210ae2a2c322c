// SPDX-License-Identifier: Apache-2.0
//
// Multilayer perceptrons on top of the tape: parameter registration with
// Glorot init and a forward pass that records the graph for backward.
//
// Convention: activations are row vectors (or B x D batches), weights are
// stored (in x out), and a layer computes y = x W + b. Parameters for prefix
// "p" are named p.w0, p.b0, p.w1, b1, ... in layer order.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/autodiff.hpp"
#include "softrl/param_store.hpp"
#include "softrl/rng.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

enum class Activation { Tanh, Relu, Identity };

struct MlpSpec {
  int input_width = 0;
  int output_width = 0;
  std::vector<int> hidden_widths;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Identity;

  // Layer widths in order: input, hidden..., output.
  std::vector<int> widths() const {
    std::vector<int> w;
    w.push_back(input_width);
    for (int h : hidden_widths) w.push_back(h);
    w.push_back(output_width);
    return w;
  }

  int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }

  void validate() const {
    if (input_width <= 0 || output_width <= 0)
      throw std::invalid_argument("mlp: widths must be positive");
    for (int h : hidden_widths)
      if (h <= 0) throw std::invalid_argument("mlp: widths must be positive");
  }
};

inline std::string layer_weight_name(const std::string& prefix, int layer) {
  return prefix + ".w" + std::to_string(layer);
}
inline std::string layer_bias_name(const std::string& prefix, int layer) {
  return prefix + ".b" + std::to_string(layer);
}

// Registers weights and biases for `spec` under `prefix`. Hidden layers use
// Glorot-uniform weights and zero biases; `zero_final` zeroes the last
// layer's weights too, which makes the network output identically zero at
// init regardless of earlier layers.
inline void init_mlp(ParameterStore& store, const std::string& prefix,
                     const MlpSpec& spec, RngStream& rng,
                     bool zero_final = false) {
  spec.validate();
  const std::vector<int> w = spec.widths();
  for (int l = 0; l + 1 < static_cast<int>(w.size()); ++l) {
    const bool last = (l + 2 == static_cast<int>(w.size()));
    Tensor weight = (last && zero_final) ? Tensor(w[l], w[l + 1])
                                         : glorot_uniform(w[l], w[l + 1], rng);
    store.add(layer_weight_name(prefix, l), std::move(weight));
    store.add(layer_bias_name(prefix, l), Tensor(1, w[l + 1]));
  }
}

inline DiffNode apply_activation(DiffNode x, Activation act) {
  switch (act) {
    case Activation::Tanh:
      return tanh(x);
    case Activation::Relu:
      return relu(x);
    case Activation::Identity:
      return x;
  }
  throw std::logic_error("unknown activation");
}

// Forward pass through the parameters registered under `prefix`, recording
// the graph on the input's tape. The input is (B x input_width).
inline DiffNode forward_mlp(const MlpSpec& spec, ParameterStore& store,
                            const std::string& prefix, DiffNode input) {
  spec.validate();
  Tape& tape = *input.tape;
  if (input.cols() != spec.input_width)
    throw std::invalid_argument("mlp " + prefix + ": input width " +
                                std::to_string(input.cols()) + ", spec expects " +
                                std::to_string(spec.input_width));
  const std::vector<int> w = spec.widths();
  DiffNode h = input;
  for (int l = 0; l + 1 < static_cast<int>(w.size()); ++l) {
    ParameterStore::Entry& we = store.at(layer_weight_name(prefix, l));
    ParameterStore::Entry& be = store.at(layer_bias_name(prefix, l));
    if (we.value.rows != w[l] || we.value.cols != w[l + 1])
      throw std::invalid_argument("mlp " + prefix + " layer " +
                                  std::to_string(l) + ": weight shape " +
                                  we.value.shape_str() + " does not chain");
    DiffNode wn = tape.leaf(we.value, &we.grad);
    DiffNode bn = tape.leaf(be.value, &be.grad);
    h = tape.add(tape.matmul(h, wn), bn);
    const bool last = (l + 2 == static_cast<int>(w.size()));
    h = apply_activation(h, last ? spec.output_activation
                                 : spec.hidden_activation);
  }
  return h;
}

}  // namespace softrl
