// SPDX-License-Identifier: Apache-2.0
//
// Invertible layers with exact log-determinant bookkeeping: affine coupling
// (RealNVP-style with BatchNorm removed, clamped scales, zero-initialized
// output layers) and the tanh squash viewed as a one-layer flow. A stack
// composes couplings and finishes with the squash; log-determinants add up
// layer by layer.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/autodiff.hpp"
#include "softrl/mlp.hpp"
#include "softrl/param_store.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

struct FlowResult {
  DiffNode output;   // B x D
  DiffNode log_det;  // B x 1, sum of contributions actually applied
};

// Selects the columns listed in idx, in order, via a constant 0/1 matrix.
inline DiffNode select_dims(DiffNode x, const std::vector<int>& idx) {
  Tape& t = *x.tape;
  Tensor sel(x.cols(), static_cast<int>(idx.size()));
  for (int j = 0; j < static_cast<int>(idx.size()); ++j)
    sel.at(idx[j], j) = 1.0;
  return t.matmul(x, t.constant(std::move(sel)));
}

// Places columns of x into a width-`total` matrix at the listed positions;
// all other columns are zero.
inline DiffNode scatter_dims(DiffNode x, int total, const std::vector<int>& idx) {
  Tape& t = *x.tape;
  Tensor sel(x.cols(), total);
  for (int j = 0; j < static_cast<int>(idx.size()); ++j)
    sel.at(j, idx[j]) = 1.0;
  return t.matmul(x, t.constant(std::move(sel)));
}

struct CouplingLayer {
  std::vector<std::uint8_t> mask;  // true = pass-through dimension
  MlpSpec net_spec;                // shared shape of scale and shift nets
  std::string scale_prefix;
  std::string shift_prefix;
  double scale_clamp = 4.0;

  std::vector<int> pass_dims() const {
    std::vector<int> v;
    for (int i = 0; i < static_cast<int>(mask.size()); ++i)
      if (mask[i]) v.push_back(i);
    return v;
  }
  std::vector<int> trans_dims() const {
    std::vector<int> v;
    for (int i = 0; i < static_cast<int>(mask.size()); ++i)
      if (!mask[i]) v.push_back(i);
    return v;
  }

  void validate() const {
    const auto p = pass_dims();
    const auto tr = trans_dims();
    if (mask.size() >= 2 && (p.empty() || tr.empty()))
      throw std::invalid_argument("coupling mask must split the dimensions");
    if (net_spec.input_width != static_cast<int>(p.size()) ||
        net_spec.output_width != static_cast<int>(tr.size()))
      throw std::invalid_argument("coupling net widths do not match the mask");
    if (!(scale_clamp > 0.0))
      throw std::invalid_argument("coupling scale clamp must be positive");
  }
};

struct FlowConfig {
  int depth = 4;
  int hidden_width = 32;
  double scale_clamp = 4.0;
};

struct FlowStack {
  std::vector<CouplingLayer> layers;
  bool final_squash = true;
};

// Registers scale and shift nets for `depth` coupling layers under `prefix`
// with alternating masks. Output layers start at zero so every layer is the
// identity map at initialization.
inline FlowStack init_flow_stack(ParameterStore& store, const std::string& prefix,
                                 int action_dim, const FlowConfig& cfg,
                                 RngStream& rng) {
  if (action_dim < 2)
    throw std::invalid_argument("flow stack needs at least two dimensions");
  FlowStack stack;
  for (int k = 0; k < cfg.depth; ++k) {
    CouplingLayer layer;
    layer.mask.assign(action_dim, 0);
    for (int i = 0; i < action_dim; ++i)
      layer.mask[i] = ((i + k) % 2 == 0) ? 1 : 0;
    const int n_pass = static_cast<int>(layer.pass_dims().size());
    const int n_trans = action_dim - n_pass;
    layer.net_spec.input_width = n_pass;
    layer.net_spec.output_width = n_trans;
    layer.net_spec.hidden_widths = {cfg.hidden_width, cfg.hidden_width};
    layer.net_spec.hidden_activation = Activation::Relu;
    layer.scale_prefix = prefix + std::to_string(k) + ".scale";
    layer.shift_prefix = prefix + std::to_string(k) + ".shift";
    layer.scale_clamp = cfg.scale_clamp;
    layer.validate();
    init_mlp(store, layer.scale_prefix, layer.net_spec, rng, /*zero_final=*/true);
    init_mlp(store, layer.shift_prefix, layer.net_spec, rng, /*zero_final=*/true);
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

// Pass-through dims copied; transformed dims become z_t * exp(s(z_p)) + t(z_p)
// with s clamped into [-scale_clamp, scale_clamp]. Log-det contribution is
// the row sum of the clamped scales.
inline FlowResult coupling_forward(const CouplingLayer& layer,
                                   ParameterStore& store, DiffNode z) {
  layer.validate();
  const int d = z.cols();
  if (d != static_cast<int>(layer.mask.size()))
    throw std::invalid_argument("coupling_forward: dimension mismatch");
  const std::vector<int> pd = layer.pass_dims();
  const std::vector<int> td = layer.trans_dims();
  DiffNode z_p = select_dims(z, pd);
  DiffNode z_t = select_dims(z, td);
  DiffNode s = clamp(forward_mlp(layer.net_spec, store, layer.scale_prefix, z_p),
                     -layer.scale_clamp, layer.scale_clamp);
  DiffNode t = forward_mlp(layer.net_spec, store, layer.shift_prefix, z_p);
  DiffNode y_t = z_t * exp(s) + t;
  DiffNode y = scatter_dims(z_p, d, pd) + scatter_dims(y_t, d, td);
  return FlowResult{y, row_sum(s)};
}

// Exact algebraic inverse on the tape: transformed dims recovered as
// (y_t - t(y_p)) * exp(-s(y_p)). Differentiable in the net parameters, which
// matters when scoring a fixed action.
inline DiffNode coupling_inverse_node(const CouplingLayer& layer,
                                      ParameterStore& store, DiffNode y) {
  layer.validate();
  const int d = y.cols();
  if (d != static_cast<int>(layer.mask.size()))
    throw std::invalid_argument("coupling_inverse: dimension mismatch");
  const std::vector<int> pd = layer.pass_dims();
  const std::vector<int> td = layer.trans_dims();
  DiffNode y_p = select_dims(y, pd);
  DiffNode y_t = select_dims(y, td);
  DiffNode s = clamp(forward_mlp(layer.net_spec, store, layer.scale_prefix, y_p),
                     -layer.scale_clamp, layer.scale_clamp);
  DiffNode t = forward_mlp(layer.net_spec, store, layer.shift_prefix, y_p);
  DiffNode z_t = (y_t - t) * exp(-s);
  return scatter_dims(y_p, d, pd) + scatter_dims(z_t, d, td);
}

// Value-level inverse of one layer.
inline Tensor coupling_inverse(const CouplingLayer& layer, ParameterStore& store,
                               const Tensor& y) {
  Tape tape;
  return coupling_inverse_node(layer, store, tape.constant(y)).value();
}

// tanh as a one-layer flow. The log-det sum_i log(1 - tanh(z_i)^2) is
// evaluated in the stable form 2 (log 2 - z - softplus(-2z)), which stays
// finite where the naive form underflows to log 0.
inline FlowResult tanh_squash(DiffNode z) {
  DiffNode per_dim = (softplus(z * -2.0) + z - 0.6931471805599453) * -2.0;
  return FlowResult{tanh(z), row_sum(per_dim)};
}

// Couplings in order, then the squash; log-dets accumulate.
inline FlowResult flow_forward(const FlowStack& stack, ParameterStore& store,
                               DiffNode z0) {
  Tape& tape = *z0.tape;
  DiffNode z = z0;
  DiffNode total = tape.constant(Tensor(z0.rows(), 1));
  for (const CouplingLayer& layer : stack.layers) {
    FlowResult r = coupling_forward(layer, store, z);
    z = r.output;
    total = total + r.log_det;
  }
  if (stack.final_squash) {
    FlowResult r = tanh_squash(z);
    return FlowResult{r.output, total + r.log_det};
  }
  return FlowResult{z, total};
}

// Value-level inverse of the coupling portion of a stack (squash excluded).
inline Tensor flow_inverse_couplings(const FlowStack& stack,
                                     ParameterStore& store, const Tensor& y) {
  Tape tape;
  DiffNode z = tape.constant(y);
  for (auto it = stack.layers.rbegin(); it != stack.layers.rend(); ++it)
    z = coupling_inverse_node(*it, store, z);
  return z.value();
}

}  // namespace softrl
