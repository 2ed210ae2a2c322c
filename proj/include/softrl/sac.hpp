// SPDX-License-Identifier: Apache-2.0
//
// Off-policy maximum-entropy actor-critic: twin Q critics over state-action
// pairs, a state-value network with a slowly tracking target, and the actor
// update under either the pathwise or the score-function estimator. One
// update touches Q, then V, then the policy, then mixes the target and
// clips the policy parameters.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "softrl/autodiff.hpp"
#include "softrl/mlp.hpp"
#include "softrl/param_store.hpp"
#include "softrl/policy.hpp"
#include "softrl/replay.hpp"
#include "softrl/rng.hpp"

namespace softrl {

struct SacConfig {
  double gamma = 0.99;
  double alpha = 0.2;
  double tau = 0.005;
  double lr = 3e-4;
  int batch_size = 256;
  std::size_t buffer_capacity = 1000000;
  int warmup_steps = 1000;
  int critic_hidden = 64;
  int critic_layers = 2;
};

struct CriticSet {
  MlpSpec q_spec;  // state (+) action -> scalar, shared by q1 and q2
  MlpSpec v_spec;  // state -> scalar
  ParameterStore q;         // parameters named q1.* and q2.*
  ParameterStore v;         // named v.*
  ParameterStore v_target;  // mirrors v.*, moved only by polyak mixing
  double tau = 0.005;
};

inline CriticSet init_critics(int state_dim, int action_dim,
                              const SacConfig& cfg, RngStream& rng) {
  CriticSet c;
  c.tau = cfg.tau;
  c.q_spec.input_width = state_dim + action_dim;
  c.q_spec.output_width = 1;
  c.q_spec.hidden_widths.assign(cfg.critic_layers, cfg.critic_hidden);
  c.q_spec.hidden_activation = Activation::Relu;
  c.v_spec = c.q_spec;
  c.v_spec.input_width = state_dim;
  init_mlp(c.q, "q1", c.q_spec, rng);
  init_mlp(c.q, "q2", c.q_spec, rng);
  init_mlp(c.v, "v", c.v_spec, rng);
  init_mlp(c.v_target, "v", c.v_spec, rng);
  copy_values(c.v_target, c.v);
  return c;
}

// Joins two (B x m) and (B x n) nodes into (B x m+n) columns.
inline DiffNode concat_cols(DiffNode left, DiffNode right) {
  const int m = left.cols(), n = right.cols();
  return spread_cols(left, m + n, 0) + spread_cols(right, m + n, m);
}

struct CriticLossResult {
  DiffNode q_loss;
  DiffNode v_loss;
  double entropy_estimate = 0.0;
};

// q-loss: both Q nets regress r + gamma (1 - done) Vtarget(s'), the target
// gradient-blocked. v-loss: V(s) regresses min(Q1,Q2)(s, a~) - alpha log
// pi(a~|s) with a~ freshly sampled and the whole target gradient-blocked.
inline CriticLossResult critic_losses(Tape& tape, const Batch& batch,
                                      CriticSet& critics, const Policy& policy,
                                      ParameterStore& policy_params,
                                      double alpha, double gamma,
                                      RngStream& rng) {
  if (batch.s.rows == 0) throw std::invalid_argument("critic_losses: empty batch");
  DiffNode s = tape.constant(batch.s);
  DiffNode a = tape.constant(batch.a);
  DiffNode r = tape.constant(batch.r);
  DiffNode s2 = tape.constant(batch.s2);
  Tensor live = batch.done;
  for (double& v : live.data) v = 1.0 - v;
  DiffNode not_done = tape.constant(live);

  DiffNode sa = concat_cols(s, a);
  DiffNode q1 = forward_mlp(critics.q_spec, critics.q, "q1", sa);
  DiffNode q2 = forward_mlp(critics.q_spec, critics.q, "q2", sa);
  DiffNode vt = forward_mlp(critics.v_spec, critics.v_target, "v", s2);
  DiffNode y = r + not_done * detach(vt) * gamma;
  DiffNode q_loss = mean(square(q1 - y)) + mean(square(q2 - y));

  Tensor noise = draw_policy_noise(policy, batch.s.rows, rng);
  ActionSample fresh = sample_action(policy, policy_params, s, noise);
  DiffNode fresh_a = detach(fresh.action);
  DiffNode sa2 = concat_cols(s, fresh_a);
  DiffNode q1f = forward_mlp(critics.q_spec, critics.q, "q1", sa2);
  DiffNode q2f = forward_mlp(critics.q_spec, critics.q, "q2", sa2);
  DiffNode v_target_val =
      detach(min_elem(q1f, q2f) - fresh.log_prob * alpha);
  DiffNode v = forward_mlp(critics.v_spec, critics.v, "v", s);
  DiffNode v_loss = mean(square(v - v_target_val));

  double lp_mean = 0.0;
  for (double x : fresh.log_prob.value().data) lp_mean += x;
  lp_mean /= batch.s.rows;
  return CriticLossResult{q_loss, v_loss, -lp_mean};
}

struct ActorLossResult {
  DiffNode loss;
  double entropy_estimate = 0.0;
};

// pathwise: mean(alpha log pi(a~|s) - min(Q1,Q2)(s,a~)) with gradients
// through the sampled action. reinforce: mean(log pi(a~|s) *
// stop-gradient(alpha log pi(a~|s) - minQ)) with the action held constant
// and the density differentiated through the inverted flow.
inline ActorLossResult actor_loss(Tape& tape, const Batch& batch,
                                  CriticSet& critics, const Policy& policy,
                                  ParameterStore& policy_params, double alpha,
                                  Estimator estimator, RngStream& rng) {
  if (batch.s.rows == 0) throw std::invalid_argument("actor_loss: empty batch");
  DiffNode s = tape.constant(batch.s);
  Tensor noise = draw_policy_noise(policy, batch.s.rows, rng);
  ActionSample fresh = sample_action(policy, policy_params, s, noise);

  double lp_mean = 0.0;
  for (double x : fresh.log_prob.value().data) lp_mean += x;
  lp_mean /= batch.s.rows;

  if (estimator == Estimator::Pathwise) {
    DiffNode sa = concat_cols(s, fresh.action);
    DiffNode q1 = forward_mlp(critics.q_spec, critics.q, "q1", sa);
    DiffNode q2 = forward_mlp(critics.q_spec, critics.q, "q2", sa);
    DiffNode loss = mean(fresh.log_prob * alpha - min_elem(q1, q2));
    return ActorLossResult{loss, -lp_mean};
  }

  Tensor fixed = fresh.action.value();
  DiffNode lp = log_prob_of(policy, policy_params, s, fixed);
  DiffNode sa = concat_cols(s, tape.constant(fixed));
  DiffNode q1 = forward_mlp(critics.q_spec, critics.q, "q1", sa);
  DiffNode q2 = forward_mlp(critics.q_spec, critics.q, "q2", sa);
  DiffNode weight = detach(lp * alpha - min_elem(q1, q2));
  DiffNode loss = mean(lp * weight);
  return ActorLossResult{loss, -lp_mean};
}

struct StepReport {
  double q_loss = 0;
  double v_loss = 0;
  double actor_loss = 0;
  double entropy_estimate = 0;
  double q_grad_norm = 0;
  double v_grad_norm = 0;
  double pi_grad_norm = 0;
};

inline double grad_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const ParameterStore::Entry& e : store.entries())
    for (double g : e.grad.data) sq += g * g;
  return std::sqrt(sq);
}

// One full update: gradient step on the Q nets, then the V net, then the
// policy, then polyak-mix the V target and clip the policy parameters.
inline StepReport update_step(Tape& tape, ReplayBuffer& buffer,
                              CriticSet& critics, const Policy& policy,
                              ParameterStore& policy_params,
                              const SacConfig& cfg, RngStream& rng) {
  if (buffer.size() < static_cast<std::size_t>(cfg.batch_size))
    throw std::logic_error("update_step: buffer smaller than one batch");
  critics.q.zero_grad();
  critics.v.zero_grad();
  critics.v_target.zero_grad();
  policy_params.zero_grad();

  Batch batch = buffer.sample(cfg.batch_size, rng);
  StepReport rep;

  tape.clear();
  CriticLossResult cl = critic_losses(tape, batch, critics, policy,
                                      policy_params, cfg.alpha, cfg.gamma, rng);
  rep.q_loss = cl.q_loss.item();
  rep.v_loss = cl.v_loss.item();
  if (!std::isfinite(rep.q_loss) || !std::isfinite(rep.v_loss))
    throw std::runtime_error("update_step: non-finite critic loss (q=" +
                             std::to_string(rep.q_loss) + ", v=" +
                             std::to_string(rep.v_loss) + ")");
  tape.backward(cl.q_loss);
  rep.q_grad_norm = grad_norm(critics.q);
  adam_step(critics.q, cfg.lr);
  tape.backward(cl.v_loss);
  rep.v_grad_norm = grad_norm(critics.v);
  adam_step(critics.v, cfg.lr);

  tape.clear();
  ActorLossResult al = actor_loss(tape, batch, critics, policy, policy_params,
                                  cfg.alpha, policy.spec.estimator, rng);
  rep.actor_loss = al.loss.item();
  rep.entropy_estimate = al.entropy_estimate;
  if (!std::isfinite(rep.actor_loss))
    throw std::runtime_error("update_step: non-finite actor loss");
  tape.backward(al.loss);
  rep.pi_grad_norm = grad_norm(policy_params);
  adam_step(policy_params, cfg.lr);

  polyak_update(critics.v_target, critics.v, critics.tau);
  clip_parameters(policy_params, policy.spec.clip_bound);
  tape.clear();
  return rep;
}

}  // namespace softrl
