// SPDX-License-Identifier: Apache-2.0
//
// Replay buffer semantics and the actor-critic update: losses are checked
// against plain scalar recomputations, gradient blocking is asserted
// directly on the stores, and the update loop is exercised end to end.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "softrl/sac.hpp"

using namespace softrl;

namespace {

// Field values are dyadic rationals so expected values recomputed in the
// checks are bit-exact regardless of floating-point contraction.
Transition make_transition(int i, bool done = false) {
  Transition t;
  t.state = Tensor::from_rows(1, 2, {0.25 * i, -0.5 * i});
  t.action = Tensor::from_rows(1, 2, {0.5, -0.015625 * i});
  t.reward = static_cast<double>(i);
  t.next_state = Tensor::from_rows(1, 2, {0.25 * i + 0.5, -0.5 * i + 0.25});
  t.done = done;
  return t;
}

// Scalar relu-MLP forward over store parameters, independent of the tape.
std::vector<double> scalar_mlp(const ParameterStore& store,
                               const std::string& prefix, const MlpSpec& spec,
                               std::vector<double> x) {
  const std::vector<int> widths = spec.widths();
  for (int layer = 0; layer + 1 < static_cast<int>(widths.size()); ++layer) {
    const Tensor& w = store.value(layer_weight_name(prefix, layer));
    const Tensor& b = store.value(layer_bias_name(prefix, layer));
    std::vector<double> y(widths[layer + 1]);
    for (int j = 0; j < widths[layer + 1]; ++j) {
      double acc = b[j];
      for (int i = 0; i < widths[layer]; ++i) acc += x[i] * w.at(i, j);
      y[j] = acc;
    }
    if (layer + 2 < static_cast<int>(widths.size()))
      for (double& v : y) v = v > 0.0 ? v : 0.0;
    x = std::move(y);
  }
  return x;
}

double scalar_q(const CriticSet& critics, const std::string& prefix,
                const std::vector<double>& s, const std::vector<double>& a) {
  std::vector<double> sa = s;
  sa.insert(sa.end(), a.begin(), a.end());
  return scalar_mlp(critics.q, prefix, critics.q_spec, sa)[0];
}

struct Rig {
  ParameterStore pi;
  Policy policy;
  CriticSet critics;
  SacConfig cfg;
};

Rig make_rig(PolicyFamily family, Estimator estimator, unsigned seed) {
  Rig r;
  r.cfg.critic_hidden = 3;
  r.cfg.critic_layers = 1;
  PolicySpec spec;
  spec.family = family;
  spec.estimator = estimator;
  spec.encoder_hidden = 4;
  spec.encoder_layers = 1;
  spec.flow.depth = 2;
  spec.flow.hidden_width = 4;
  RngStream rng(seed);
  r.policy = init_policy(r.pi, spec, rng);
  r.critics = init_critics(spec.state_dim, spec.action_dim, r.cfg, rng);
  return r;
}

Batch make_batch(const std::vector<Transition>& ts) {
  const int n = static_cast<int>(ts.size());
  const int ds = ts[0].state.cols, da = ts[0].action.cols;
  Batch b;
  b.s = Tensor(n, ds);
  b.a = Tensor(n, da);
  b.r = Tensor(n, 1);
  b.s2 = Tensor(n, ds);
  b.done = Tensor(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < ds; ++c) b.s.at(i, c) = ts[i].state[c];
    for (int c = 0; c < da; ++c) b.a.at(i, c) = ts[i].action[c];
    for (int c = 0; c < ds; ++c) b.s2.at(i, c) = ts[i].next_state[c];
    b.r[i] = ts[i].reward;
    b.done[i] = ts[i].done ? 1.0 : 0.0;
  }
  return b;
}

double max_abs_grad(const ParameterStore& store) {
  double worst = 0.0;
  for (const ParameterStore::Entry& e : store.entries())
    for (double g : e.grad.data) worst = std::max(worst, std::fabs(g));
  return worst;
}

}  // namespace

TEST_CASE("replay ring keeps logical order and evicts the oldest") {
  ReplayBuffer buf(4, 2, 2);
  for (int i = 0; i < 3; ++i) buf.push(make_transition(i));
  REQUIRE(buf.size() == 3);
  for (int i = 0; i < 3; ++i) REQUIRE(buf.get(i).reward == i);

  for (int i = 3; i < 6; ++i) buf.push(make_transition(i));
  REQUIRE(buf.size() == 4);
  for (int i = 0; i < 4; ++i) {
    Transition t = buf.get(i);
    REQUIRE(t.reward == i + 2);
    REQUIRE(t.state.at(0, 0) == 0.25 * (i + 2));
    REQUIRE(t.next_state.at(0, 1) == -0.5 * (i + 2) + 0.25);
  }
  REQUIRE_THROWS_AS(buf.get(4), std::out_of_range);
}

TEST_CASE("replay push validates dimensions and rewards") {
  ReplayBuffer buf(4, 2, 2);
  Transition t = make_transition(0);
  Transition bad_state = t;
  bad_state.state = Tensor(1, 3);
  REQUIRE_THROWS_AS(buf.push(bad_state), std::invalid_argument);
  Transition bad_action = t;
  bad_action.action = Tensor(1, 1);
  REQUIRE_THROWS_AS(buf.push(bad_action), std::invalid_argument);
  Transition bad_reward = t;
  bad_reward.reward = std::nan("");
  REQUIRE_THROWS_AS(buf.push(bad_reward), std::invalid_argument);
  bad_reward.reward = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(buf.push(bad_reward), std::invalid_argument);
  REQUIRE(buf.size() == 0);
  REQUIRE_THROWS_AS(ReplayBuffer(0, 2, 2), std::invalid_argument);
}

TEST_CASE("replay sampling is uniform with replacement over live entries") {
  ReplayBuffer buf(64, 2, 2);
  for (int i = 0; i < 64; ++i) buf.push(make_transition(i, i % 2 == 0));
  RngStream rng(7);
  std::vector<int> hits(64, 0);
  for (int round = 0; round < 200; ++round) {
    Batch b = buf.sample(64, rng);
    REQUIRE(b.s.rows == 64);
    REQUIRE(b.s.cols == 2);
    REQUIRE(b.done.cols == 1);
    for (int row = 0; row < 64; ++row) {
      const int i = static_cast<int>(b.r[row]);
      REQUIRE(i >= 0);
      REQUIRE(i < 64);
      ++hits[i];
      REQUIRE(b.s.at(row, 0) == 0.25 * i);
      REQUIRE(b.a.at(row, 1) == -0.015625 * i);
      REQUIRE(b.s2.at(row, 1) == -0.5 * i + 0.25);
      REQUIRE(b.done[row] == (i % 2 == 0 ? 1.0 : 0.0));
    }
  }
  for (int i = 0; i < 64; ++i) REQUIRE(hits[i] > 0);
  ReplayBuffer empty(4, 2, 2);
  REQUIRE_THROWS_AS(empty.sample(1, rng), std::logic_error);
}

TEST_CASE("replay restore reproduces the saved ring") {
  ReplayBuffer buf(4, 2, 2);
  for (int i = 0; i < 6; ++i) buf.push(make_transition(i, i == 4));
  ReplayBuffer copy(4, 2, 2);
  copy.restore(buf.size(), buf.cursor(), buf.raw_states(), buf.raw_actions(),
               buf.raw_next_states(), buf.raw_rewards(), buf.raw_dones());
  REQUIRE(copy.size() == buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    Transition a = buf.get(i), b = copy.get(i);
    REQUIRE(a.reward == b.reward);
    REQUIRE(a.done == b.done);
    for (int c = 0; c < 2; ++c) REQUIRE(a.state[c] == b.state[c]);
  }
  copy.push(make_transition(6));
  REQUIRE(copy.get(3).reward == 6.0);
  REQUIRE_THROWS_AS(copy.restore(9, 0, buf.raw_states(), buf.raw_actions(),
                                 buf.raw_next_states(), buf.raw_rewards(),
                                 buf.raw_dones()),
                    std::invalid_argument);
}

TEST_CASE("critic losses match a scalar recomputation") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 11);
  for (ParameterStore::Entry& e : rig.critics.v_target.entries())
    for (double& v : e.value.data) v *= 1.3;
  Batch batch = make_batch({make_transition(1), make_transition(2, true),
                            make_transition(3)});
  const double alpha = 0.2, gamma = 0.9;

  RngStream rng_tape(42), rng_oracle(42);
  Tensor noise = draw_policy_noise(rig.policy, 3, rng_oracle);

  Tape tape;
  CriticLossResult res = critic_losses(tape, batch, rig.critics, rig.policy,
                                       rig.pi, alpha, gamma, rng_tape);

  double q_loss = 0.0, v_loss = 0.0;
  const MlpSpec enc = rig.policy.spec.encoder_spec();
  for (int row = 0; row < 3; ++row) {
    std::vector<double> s = {batch.s.at(row, 0), batch.s.at(row, 1)};
    std::vector<double> a = {batch.a.at(row, 0), batch.a.at(row, 1)};
    std::vector<double> s2 = {batch.s2.at(row, 0), batch.s2.at(row, 1)};
    const double vt =
        scalar_mlp(rig.critics.v_target, "v", rig.critics.v_spec, s2)[0];
    const double y = batch.r[row] + gamma * (1.0 - batch.done[row]) * vt;
    const double d1 = scalar_q(rig.critics, "q1", s, a) - y;
    const double d2 = scalar_q(rig.critics, "q2", s, a) - y;
    q_loss += (d1 * d1 + d2 * d2) / 3.0;

    std::vector<double> heads = scalar_mlp(rig.pi, "pi.enc", enc, s);
    double log_pi = 0.0;
    std::vector<double> fresh(2);
    for (int d = 0; d < 2; ++d) {
      const double ls = std::clamp(heads[2 + d], kLogStdMin, kLogStdMax);
      const double z = heads[d] + std::exp(ls) * noise.at(row, d);
      fresh[d] = std::tanh(z);
      log_pi += -0.5 * noise.at(row, d) * noise.at(row, d) - ls - kHalfLog2Pi;
      log_pi -= std::log1p(-fresh[d] * fresh[d]);
    }
    const double target = std::min(scalar_q(rig.critics, "q1", s, fresh),
                                   scalar_q(rig.critics, "q2", s, fresh)) -
                          alpha * log_pi;
    const double v = scalar_mlp(rig.critics.v, "v", rig.critics.v_spec, s)[0];
    v_loss += (v - target) * (v - target) / 3.0;
  }
  REQUIRE(res.q_loss.item() == Catch::Approx(q_loss).epsilon(1e-9));
  REQUIRE(res.v_loss.item() == Catch::Approx(v_loss).epsilon(1e-9));
  REQUIRE(std::isfinite(res.entropy_estimate));
}

TEST_CASE("terminal rows drop the bootstrap exactly like a zero discount") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 3);
  rig.critics.v_target.at("v.b1").value[0] = 1e9;
  Batch batch = make_batch({make_transition(1, true), make_transition(2, true)});

  Tape t1, t2;
  RngStream ra(5), rb(5);
  double with_discount =
      critic_losses(t1, batch, rig.critics, rig.policy, rig.pi, 0.2, 0.99, ra)
          .q_loss.item();
  double no_discount =
      critic_losses(t2, batch, rig.critics, rig.policy, rig.pi, 0.2, 0.0, rb)
          .q_loss.item();
  REQUIRE(std::isfinite(with_discount));
  REQUIRE(with_discount == Catch::Approx(no_discount).epsilon(1e-12));
}

TEST_CASE("critic backward leaves the policy and the target net untouched") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 9);
  Batch batch = make_batch({make_transition(1), make_transition(2)});
  RngStream rng(13);
  Tape tape;
  CriticLossResult res = critic_losses(tape, batch, rig.critics, rig.policy,
                                       rig.pi, 0.2, 0.99, rng);
  tape.backward(res.q_loss);
  tape.backward(res.v_loss);
  REQUIRE(max_abs_grad(rig.critics.q) > 0.0);
  REQUIRE(max_abs_grad(rig.critics.v) > 0.0);
  REQUIRE(max_abs_grad(rig.critics.v_target) == 0.0);
  REQUIRE(max_abs_grad(rig.pi) == 0.0);
}

TEST_CASE("the twin critics enter the loss symmetrically") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 21);
  Batch batch = make_batch({make_transition(1), make_transition(4, true)});
  Tape t1;
  RngStream ra(3);
  double before =
      critic_losses(t1, batch, rig.critics, rig.policy, rig.pi, 0.2, 0.99, ra)
          .q_loss.item();

  for (ParameterStore::Entry& e : rig.critics.q.entries()) {
    if (e.name.rfind("q1.", 0) != 0) continue;
    Tensor& other = rig.critics.q.at("q2." + e.name.substr(3)).value;
    std::swap(e.value.data, other.data);
  }
  Tape t2;
  RngStream rb(3);
  double after =
      critic_losses(t2, batch, rig.critics, rig.policy, rig.pi, 0.2, 0.99, rb)
          .q_loss.item();
  REQUIRE(before == Catch::Approx(after).epsilon(1e-12));
}

TEST_CASE("init wires critic shapes and starts the target as a copy") {
  RngStream rng(2);
  SacConfig cfg;
  CriticSet c = init_critics(2, 2, cfg, rng);
  REQUIRE(c.q_spec.input_width == 4);
  REQUIRE(c.q_spec.output_width == 1);
  REQUIRE(c.v_spec.input_width == 2);
  REQUIRE(c.q.find("q1.w0") != nullptr);
  REQUIRE(c.q.find("q2.w0") != nullptr);
  for (const ParameterStore::Entry& e : c.v.entries()) {
    const Tensor& tv = c.v_target.value(e.name);
    for (int i = 0; i < e.value.size(); ++i) REQUIRE(tv[i] == e.value[i]);
  }
}

TEST_CASE("pathwise actor loss against a constant critic is minus its value") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 17);
  const double c = 2.75;
  for (ParameterStore::Entry& e : rig.critics.q.entries())
    e.value.fill(0.0);
  rig.critics.q.at("q1.b1").value[0] = c;
  rig.critics.q.at("q2.b1").value[0] = c;

  Batch batch = make_batch({make_transition(1), make_transition(2)});
  RngStream rng(31);
  Tape tape;
  ActorLossResult res = actor_loss(tape, batch, rig.critics, rig.policy,
                                   rig.pi, 0.0, Estimator::Pathwise, rng);
  REQUIRE(res.loss.item() == Catch::Approx(-c).epsilon(1e-12));
  tape.backward(res.loss);
  REQUIRE(max_abs_grad(rig.pi) == 0.0);
}

TEST_CASE("score-function actor backward leaves the critics untouched") {
  for (PolicyFamily family : {PolicyFamily::Gaussian, PolicyFamily::Flow}) {
    Rig rig = make_rig(family, Estimator::Reinforce, 23);
    Batch batch = make_batch({make_transition(1), make_transition(2)});
    RngStream rng(37);
    Tape tape;
    ActorLossResult res = actor_loss(tape, batch, rig.critics, rig.policy,
                                     rig.pi, 0.2, Estimator::Reinforce, rng);
    REQUIRE(std::isfinite(res.loss.item()));
    tape.backward(res.loss);
    REQUIRE(max_abs_grad(rig.critics.q) == 0.0);
    REQUIRE(max_abs_grad(rig.pi) > 0.0);
  }
}

TEST_CASE("zero learning rate leaves parameters fixed but reports diagnostics") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 29);
  rig.cfg.lr = 0.0;
  rig.cfg.batch_size = 8;
  ReplayBuffer buf(32, 2, 2);
  for (int i = 0; i < 16; ++i) buf.push(make_transition(i, i % 5 == 0));

  std::vector<Tensor> before;
  for (const ParameterStore::Entry& e : rig.critics.q.entries())
    before.push_back(e.value);
  for (const ParameterStore::Entry& e : rig.critics.v.entries())
    before.push_back(e.value);
  for (const ParameterStore::Entry& e : rig.pi.entries())
    before.push_back(e.value);

  RngStream rng(41);
  Tape tape;
  StepReport rep = update_step(tape, buf, rig.critics, rig.policy, rig.pi,
                               rig.cfg, rng);
  REQUIRE(std::isfinite(rep.q_loss));
  REQUIRE(std::isfinite(rep.v_loss));
  REQUIRE(std::isfinite(rep.actor_loss));
  REQUIRE(std::isfinite(rep.entropy_estimate));
  REQUIRE(rep.q_grad_norm > 0.0);
  REQUIRE(rep.v_grad_norm > 0.0);
  REQUIRE(rep.pi_grad_norm > 0.0);

  std::size_t k = 0;
  for (const ParameterStore::Entry& e : rig.critics.q.entries()) {
    for (int i = 0; i < e.value.size(); ++i)
      REQUIRE(e.value[i] == before[k][i]);
    ++k;
  }
  for (const ParameterStore::Entry& e : rig.critics.v.entries()) {
    for (int i = 0; i < e.value.size(); ++i)
      REQUIRE(e.value[i] == before[k][i]);
    ++k;
  }
  for (const ParameterStore::Entry& e : rig.pi.entries()) {
    for (int i = 0; i < e.value.size(); ++i)
      REQUIRE(e.value[i] == before[k][i]);
    ++k;
  }
  REQUIRE(rig.critics.q.step_count() == 1);
  REQUIRE(rig.pi.step_count() == 1);
}

TEST_CASE("updates respect the policy parameter clip") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 43);
  rig.policy.spec.clip_bound = 0.01;
  rig.cfg.lr = 0.05;
  rig.cfg.batch_size = 8;
  ReplayBuffer buf(32, 2, 2);
  for (int i = 0; i < 16; ++i) buf.push(make_transition(i));
  RngStream rng(47);
  Tape tape;
  for (int step = 0; step < 3; ++step)
    update_step(tape, buf, rig.critics, rig.policy, rig.pi, rig.cfg, rng);
  for (const ParameterStore::Entry& e : rig.pi.entries())
    for (double v : e.value.data) REQUIRE(std::fabs(v) <= 0.01 + 1e-15);
}

TEST_CASE("update aborts before touching parameters when a loss is not finite") {
  Rig rig = make_rig(PolicyFamily::Gaussian, Estimator::Pathwise, 53);
  rig.cfg.batch_size = 4;
  ReplayBuffer buf(16, 2, 2);
  for (int i = 0; i < 8; ++i) buf.push(make_transition(i));
  rig.critics.q.at("q1.b1").value[0] = std::nan("");
  RngStream rng(59);
  Tape tape;
  REQUIRE_THROWS_WITH(
      update_step(tape, buf, rig.critics, rig.policy, rig.pi, rig.cfg, rng),
      Catch::Matchers::ContainsSubstring("non-finite"));
  REQUIRE(rig.critics.v.step_count() == 0);
  REQUIRE(rig.pi.step_count() == 0);
}

TEST_CASE("a short offline training loop stays finite for every family") {
  struct Case {
    PolicyFamily family;
    Estimator estimator;
  };
  for (Case c : {Case{PolicyFamily::Gaussian, Estimator::Pathwise},
                 Case{PolicyFamily::Exponential, Estimator::Pathwise},
                 Case{PolicyFamily::Flow, Estimator::Pathwise},
                 Case{PolicyFamily::Flow, Estimator::Reinforce}}) {
    Rig rig = make_rig(c.family, c.estimator, 61);
    rig.cfg.batch_size = 16;
    rig.cfg.lr = 1e-3;
    ReplayBuffer buf(128, 2, 2);
    RngStream rng(67);
    for (int i = 0; i < 64; ++i) buf.push(make_transition(i % 10, i % 9 == 0));
    Tape tape;
    StepReport rep;
    for (int step = 0; step < 10; ++step)
      rep = update_step(tape, buf, rig.critics, rig.policy, rig.pi, rig.cfg,
                        rng);
    REQUIRE(std::isfinite(rep.q_loss));
    REQUIRE(std::isfinite(rep.v_loss));
    REQUIRE(std::isfinite(rep.actor_loss));
    REQUIRE(rig.critics.q.step_count() == 10);
    for (const ParameterStore::Entry& e : rig.pi.entries())
      for (double v : e.value.data) REQUIRE(std::fabs(v) <= 1.0 + 1e-15);
    bool target_lags = false;
    for (const ParameterStore::Entry& e : rig.critics.v.entries()) {
      const Tensor& tv = rig.critics.v_target.value(e.name);
      for (int i = 0; i < e.value.size(); ++i)
        if (tv[i] != e.value[i]) target_lags = true;
    }
    REQUIRE(target_lags);
  }
}
