// SPDX-License-Identifier: Apache-2.0
//
// Three stochastic policy families behind one interface: squashed factored
// Gaussian, squashed factored Exponential, and a normalizing-flow policy
// (Gaussian base pushed through affine couplings, then squashed). Each
// family can sample an action with its exact log-probability and score an
// arbitrary action by inverting the squash (and the coupling stack) on the
// tape, so parameter gradients survive the inversion.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/autodiff.hpp"
#include "softrl/distributions.hpp"
#include "softrl/flows.hpp"
#include "softrl/mlp.hpp"
#include "softrl/param_store.hpp"
#include "softrl/rng.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

enum class PolicyFamily { Gaussian, Exponential, Flow };
enum class Estimator { Pathwise, Reinforce };

inline constexpr double kAtanhGuard = 1.0 - 1e-6;

inline const char* family_name(PolicyFamily f) {
  switch (f) {
    case PolicyFamily::Gaussian:
      return "gaussian";
    case PolicyFamily::Exponential:
      return "exponential";
    case PolicyFamily::Flow:
      return "flow";
  }
  return "?";
}

inline const char* estimator_name(Estimator e) {
  return e == Estimator::Pathwise ? "pathwise" : "reinforce";
}

inline PolicyFamily family_from_name(const std::string& name) {
  if (name == "gaussian") return PolicyFamily::Gaussian;
  if (name == "exponential") return PolicyFamily::Exponential;
  if (name == "flow") return PolicyFamily::Flow;
  throw std::invalid_argument("unknown policy family: " + name);
}

inline Estimator estimator_from_name(const std::string& name) {
  if (name == "pathwise") return Estimator::Pathwise;
  if (name == "reinforce") return Estimator::Reinforce;
  throw std::invalid_argument("unknown estimator: " + name);
}

struct PolicySpec {
  PolicyFamily family = PolicyFamily::Gaussian;
  Estimator estimator = Estimator::Pathwise;
  int state_dim = 2;
  int action_dim = 2;
  int encoder_hidden = 64;
  int encoder_layers = 2;
  FlowConfig flow;
  double clip_bound = 1.0;

  MlpSpec encoder_spec() const {
    MlpSpec s;
    s.input_width = state_dim;
    s.output_width = 2 * action_dim;
    s.hidden_widths.assign(encoder_layers, encoder_hidden);
    s.hidden_activation = Activation::Relu;
    return s;
  }
};

struct Policy {
  PolicySpec spec;
  FlowStack flow;  // populated for the flow family only
};

inline Policy init_policy(ParameterStore& store, const PolicySpec& spec,
                          RngStream& rng) {
  Policy p;
  p.spec = spec;
  init_mlp(store, "pi.enc", spec.encoder_spec(), rng);
  if (spec.family == PolicyFamily::Flow)
    p.flow = init_flow_stack(store, "pi.flow", spec.action_dim, spec.flow, rng);
  return p;
}

// Standardized noise for one batch: N(0,1) entries for Gaussian and flow
// families, open-interval uniforms for the Exponential family.
inline Tensor draw_policy_noise(const Policy& policy, int batch, RngStream& rng) {
  if (policy.spec.family == PolicyFamily::Exponential)
    return rng.uniform_open01(batch, policy.spec.action_dim);
  return rng.normal(batch, policy.spec.action_dim);
}

struct EncoderHeads {
  DiffNode first;   // mean (Gaussian/flow) or location (Exponential)
  DiffNode second;  // raw log-std or raw log-rate, clamped downstream
};

inline EncoderHeads encode_state(const Policy& policy, ParameterStore& store,
                                 DiffNode states) {
  DiffNode heads = forward_mlp(policy.spec.encoder_spec(), store, "pi.enc", states);
  if (!heads.value().all_finite())
    throw std::runtime_error(
        "policy encoder produced a non-finite output; parameters have "
        "diverged (check clipping configuration)");
  const int d = policy.spec.action_dim;
  return EncoderHeads{slice_cols(heads, 0, d), slice_cols(heads, d, d)};
}

struct ActionSample {
  DiffNode action;     // B x D in (-1,1)^D, pathwise-differentiable
  DiffNode log_prob;   // B x 1, exact density at the sampled action
  Tensor pre_squash;   // B x D diagnostic: the squash input
};

// Samples actions for a batch of states with the exact log-density built on
// the same tape. `noise` must come from draw_policy_noise (or match its
// distributional contract) and enters the graph as a constant.
inline ActionSample sample_action(const Policy& policy, ParameterStore& store,
                                  DiffNode states, const Tensor& noise) {
  Tape& tape = *states.tape;
  if (noise.rows != states.rows() || noise.cols != policy.spec.action_dim)
    throw std::invalid_argument("sample_action: noise shape mismatch");
  EncoderHeads heads = encode_state(policy, store, states);
  DiffNode eps = tape.constant(noise);

  switch (policy.spec.family) {
    case PolicyFamily::Gaussian: {
      GaussianParams gp = make_gaussian_params(heads.first, heads.second);
      DiffNode z = gaussian_rsample(gp, eps);
      FlowResult sq = tanh_squash(z);
      DiffNode lp = gaussian_log_prob(gp, z) - sq.log_det;
      return ActionSample{sq.output, lp, z.value()};
    }
    case PolicyFamily::Exponential: {
      ExponentialParams ep = make_exponential_params(heads.second, heads.first);
      DiffNode z = exponential_rsample(ep, eps);
      FlowResult sq = tanh_squash(z);
      DiffNode lp = exponential_log_prob(ep, z) - sq.log_det;
      return ActionSample{sq.output, lp, z.value()};
    }
    case PolicyFamily::Flow: {
      GaussianParams gp = make_gaussian_params(heads.first, heads.second);
      DiffNode z0 = gaussian_rsample(gp, eps);
      DiffNode z = z0;
      DiffNode log_det = tape.constant(Tensor(states.rows(), 1));
      for (const CouplingLayer& layer : policy.flow.layers) {
        FlowResult r = coupling_forward(layer, store, z);
        z = r.output;
        log_det = log_det + r.log_det;
      }
      FlowResult sq = tanh_squash(z);
      DiffNode lp = gaussian_log_prob(gp, z0) - log_det - sq.log_det;
      return ActionSample{sq.output, lp, z.value()};
    }
  }
  throw std::logic_error("unknown policy family");
}

// atanh with the boundary guard: inputs are clamped into the open cube
// before inversion. Value-level, for scoring externally supplied actions.
inline Tensor atanh_guarded(const Tensor& actions) {
  Tensor z(actions.rows, actions.cols);
  for (int i = 0; i < actions.size(); ++i) {
    double a = actions[i];
    if (a > kAtanhGuard) a = kAtanhGuard;
    if (a < -kAtanhGuard) a = -kAtanhGuard;
    z[i] = std::atanh(a);
  }
  return z;
}

// Sum_i log(1 - a_i^2) per row after the boundary guard.
inline Tensor tanh_log_det_at(const Tensor& actions) {
  Tensor ld(actions.rows, 1);
  for (int r = 0; r < actions.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < actions.cols; ++c) {
      double a = actions.at(r, c);
      if (a > kAtanhGuard) a = kAtanhGuard;
      if (a < -kAtanhGuard) a = -kAtanhGuard;
      s += std::log1p(-a * a);
    }
    ld[r] = s;
  }
  return ld;
}

// Log-density of fixed actions under the current parameters. The actions
// enter as constants; the squash and the coupling stack are inverted on the
// tape, so the result is differentiable in every policy parameter. This is
// the scoring path the score-function estimator differentiates.
inline DiffNode log_prob_of(const Policy& policy, ParameterStore& store,
                            DiffNode states, const Tensor& actions) {
  Tape& tape = *states.tape;
  if (actions.rows != states.rows() || actions.cols != policy.spec.action_dim)
    throw std::invalid_argument("log_prob_of: action shape mismatch");
  EncoderHeads heads = encode_state(policy, store, states);
  DiffNode z_last = tape.constant(atanh_guarded(actions));
  DiffNode squash_ld = tape.constant(tanh_log_det_at(actions));

  switch (policy.spec.family) {
    case PolicyFamily::Gaussian: {
      GaussianParams gp = make_gaussian_params(heads.first, heads.second);
      return gaussian_log_prob(gp, z_last) - squash_ld;
    }
    case PolicyFamily::Exponential: {
      ExponentialParams ep = make_exponential_params(heads.second, heads.first);
      return exponential_log_prob(ep, z_last) - squash_ld;
    }
    case PolicyFamily::Flow: {
      DiffNode z = z_last;
      DiffNode log_det = tape.constant(Tensor(states.rows(), 1));
      for (auto it = policy.flow.layers.rbegin(); it != policy.flow.layers.rend();
           ++it) {
        const CouplingLayer& layer = *it;
        const std::vector<int> pd = layer.pass_dims();
        const std::vector<int> td = layer.trans_dims();
        DiffNode y_p = select_dims(z, pd);
        DiffNode y_t = select_dims(z, td);
        DiffNode s = clamp(
            forward_mlp(layer.net_spec, store, layer.scale_prefix, y_p),
            -layer.scale_clamp, layer.scale_clamp);
        DiffNode t = forward_mlp(layer.net_spec, store, layer.shift_prefix, y_p);
        DiffNode z_t = (y_t - t) * exp(-s);
        z = scatter_dims(y_p, policy.spec.action_dim, pd) +
            scatter_dims(z_t, policy.spec.action_dim, td);
        log_det = log_det + row_sum(s);
      }
      GaussianParams gp = make_gaussian_params(heads.first, heads.second);
      return gaussian_log_prob(gp, z) - log_det - squash_ld;
    }
  }
  throw std::logic_error("unknown policy family");
}

// Monte Carlo policy entropy at one state: minus the mean log-probability of
// fresh samples, evaluated in forward-only chunks.
inline double policy_entropy_estimate(const Policy& policy, ParameterStore& store,
                                      const Tensor& state, int n_samples,
                                      RngStream& rng) {
  if (n_samples < 1)
    throw std::invalid_argument("policy_entropy_estimate: n_samples < 1");
  if (state.rows != 1)
    throw std::invalid_argument("policy_entropy_estimate: one state row expected");
  std::vector<double> log_probs;
  log_probs.reserve(n_samples);
  const int chunk = 4096;
  for (int done = 0; done < n_samples;) {
    const int b = std::min(chunk, n_samples - done);
    Tensor states(b, state.cols);
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < state.cols; ++c) states.at(r, c) = state[c];
    Tape tape;
    Tensor noise = draw_policy_noise(policy, b, rng);
    ActionSample s = sample_action(policy, store, tape.constant(states), noise);
    for (int r = 0; r < b; ++r) log_probs.push_back(s.log_prob.value()[r]);
    done += b;
  }
  return entropy_mc(log_probs);
}

}  // namespace softrl
