// SPDX-License-Identifier: Apache-2.0
//
// Property suites behind the `verify` command and the acceptance checks.
//
// Five suites, each returning one CheckResult per property: finite-difference
// audits of every backward pass, flow invertibility and density audits, the
// zero-initialized-flow/Gaussian equivalence, environment invariants, and
// harness bookkeeping invariants. Suites are deterministic in their seed.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "softrl/autodiff.hpp"
#include "softrl/flows.hpp"
#include "softrl/gridworld.hpp"
#include "softrl/harness.hpp"
#include "softrl/heatmap.hpp"
#include "softrl/mlp.hpp"
#include "softrl/param_store.hpp"
#include "softrl/policy.hpp"
#include "softrl/replay.hpp"
#include "softrl/rng.hpp"
#include "softrl/sac.hpp"
#include "softrl/tensor.hpp"
#include "softrl/textio.hpp"

namespace softrl {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.passed) return false;
  return true;
}

inline int print_check_lines(std::ostream& os, const std::string& tag,
                             const std::vector<CheckResult>& results) {
  int failures = 0;
  for (const CheckResult& r : results) {
    os << (r.passed ? "  pass  " : "  FAIL  ") << tag << ": " << r.name;
    if (!r.detail.empty()) os << " [" << r.detail << "]";
    os << "\n";
    if (!r.passed) ++failures;
  }
  return failures;
}

namespace check_detail {

inline std::string fmt_sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

// Accumulated worst case over many finite-difference comparisons.
struct FdStats {
  long long configs = 0;
  long long coords = 0;
  double max_err = 0.0;
  std::string worst;
};

// Audits every coordinate of `store` against one backward pass of the scalar
// `make_loss`. The loss must be a deterministic function of the store values:
// any sampling inside it has to reuse frozen noise. The error metric is
// |fd - bp| / max(|fd|, |bp|, floor), a relative error with an absolute floor
// so that near-zero gradients compare by difference instead of ratio.
//
// Coordinates that fail at the base step size are re-measured at smaller
// steps. A central difference that straddles a kink (a relu boundary or an
// absolute value inside a log-density) disagrees with the one-sided
// derivative by O(1) no matter how correct the backward pass is, but the
// straddle condition |p| < h |dp/dtheta| vanishes as h shrinks, while a
// genuinely wrong gradient keeps its error at every step size.
template <typename LossFn>
void fd_audit(ParameterStore& store, const std::string& label,
              LossFn&& make_loss, FdStats& stats, double h = 1e-5) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(make_loss(tape));
  }
  auto fd_at = [&](double& coord, double orig, double step) {
    coord = orig + step;
    double fp;
    {
      Tape t;
      fp = make_loss(t).item();
    }
    coord = orig - step;
    double fm;
    {
      Tape t;
      fm = make_loss(t).item();
    }
    coord = orig;
    return (fp - fm) / (2.0 * step);
  };
  auto err_of = [](double fd, double bp) {
    const double denom = std::max({std::fabs(fd), std::fabs(bp), 1e-3});
    return std::fabs(fd - bp) / denom;
  };
  for (ParameterStore::Entry& e : store.entries()) {
    for (int i = 0; i < e.value.size(); ++i) {
      const double orig = e.value[i];
      const double bp = e.grad[i];
      double err = err_of(fd_at(e.value[i], orig, h), bp);
      for (double step = h / 8.0; err > 1e-4 && step > h / 600.0; step /= 8.0)
        err = std::min(err, err_of(fd_at(e.value[i], orig, step), bp));
      ++stats.coords;
      if (err > stats.max_err) {
        stats.max_err = err;
        stats.worst = label + "/" + e.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  ++stats.configs;
}

inline CheckResult fd_result(const std::string& name, const FdStats& s,
                             double tol) {
  CheckResult r;
  r.name = name;
  r.passed = s.coords > 0 && s.max_err <= tol;
  r.detail = std::to_string(s.configs) + " configs, " +
             std::to_string(s.coords) + " coords, max err " +
             fmt_sci(s.max_err) + (s.worst.empty() ? "" : " at " + s.worst);
  return r;
}

// Adds bounded uniform noise to every parameter whose name starts with
// `prefix`, so zero-initialized layers (flow output layers) become active
// maps. An empty prefix jitters the whole store.
inline void jitter_store(ParameterStore& store, double scale, RngStream& rng,
                         const std::string& prefix = "") {
  for (ParameterStore::Entry& e : store.entries()) {
    if (e.name.compare(0, prefix.size(), prefix) != 0) continue;
    for (int i = 0; i < e.value.size(); ++i)
      e.value[i] += scale * (2.0 * rng.uniform01() - 1.0);
  }
}

inline PolicySpec small_policy_spec(PolicyFamily family, int hidden, int layers,
                                    int flow_depth, int flow_hidden) {
  PolicySpec spec;
  spec.family = family;
  spec.encoder_hidden = hidden;
  spec.encoder_layers = layers;
  spec.flow.depth = flow_depth;
  spec.flow.hidden_width = flow_hidden;
  return spec;
}

inline bool inside_any_wall(const GridLayout& layout, double x, double y) {
  for (const WallRect& w : layout.walls)
    if (w.strictly_inside(x, y)) return true;
  return false;
}

// Greedy waypoint follower used by the solvability probe: full-length steps
// toward the active waypoint, advancing once within one step length.
inline double follow_waypoints(const GridLayout& layout,
                               const std::vector<std::pair<double, double>>& points,
                               int* steps_to_last) {
  auto [state, obs] = env_reset(layout);
  std::size_t k = 0;
  double episode_return = 0.0;
  int reached_at = -1;
  for (int t = 0; t < layout.max_episode_steps; ++t) {
    double ax = 0.0, ay = 0.0;
    if (k < points.size()) {
      ax = (points[k].first - state.x) / layout.step_length;
      ay = (points[k].second - state.y) / layout.step_length;
    }
    auto [next, out] = env_step(layout, state, ax, ay);
    state = next;
    episode_return += out.reward;
    if (k < points.size()) {
      const double dx = points[k].first - state.x;
      const double dy = points[k].second - state.y;
      if (std::sqrt(dx * dx + dy * dy) <= layout.step_length) {
        ++k;
        if (k == points.size()) reached_at = state.steps;
      }
    }
  }
  if (steps_to_last != nullptr) *steps_to_last = reached_at;
  return episode_return;
}

struct TrajectoryLog {
  std::vector<double> xs, ys, rewards;
};

inline TrajectoryLog random_trajectory(const GridLayout& layout,
                                       std::uint64_t seed, int steps) {
  RngStream rng(seed);
  TrajectoryLog log;
  auto [state, obs] = env_reset(layout);
  for (int t = 0; t < steps; ++t) {
    const double ax = 2.0 * rng.uniform01() - 1.0;
    const double ay = 2.0 * rng.uniform01() - 1.0;
    auto [next, out] = env_step(layout, state, ax, ay);
    state = out.done ? env_reset(layout).first : next;
    log.xs.push_back(next.x);
    log.ys.push_back(next.y);
    log.rewards.push_back(out.reward);
  }
  return log;
}

}  // namespace check_detail

// --- gradient fidelity ------------------------------------------------------
//
// Central finite differences against the backward pass for every network,
// distribution, flow layer, and loss, across >= 100 random configurations.
inline std::vector<CheckResult> gradient_fidelity_suite(std::uint64_t seed) {
  using check_detail::FdStats;
  using check_detail::fd_audit;
  using check_detail::fd_result;
  using check_detail::jitter_store;
  using check_detail::small_policy_spec;
  const double tol = 1e-4;
  RngStream cfg(seed);
  std::vector<CheckResult> out;

  FdStats mlp_stats;
  for (int c = 0; c < 36; ++c) {
    MlpSpec spec;
    spec.input_width = 1 + static_cast<int>(cfg.integer(4));
    spec.output_width = 1 + static_cast<int>(cfg.integer(3));
    const int depth = 1 + static_cast<int>(cfg.integer(3));
    spec.hidden_widths.assign(depth, 2 + static_cast<int>(cfg.integer(5)));
    spec.hidden_activation =
        c % 3 == 0 ? Activation::Tanh
                   : (c % 3 == 1 ? Activation::Relu : Activation::Identity);
    ParameterStore store;
    init_mlp(store, "net", spec, cfg);
    jitter_store(store, 0.2, cfg);
    const Tensor x = cfg.uniform_sym(1 + static_cast<int>(cfg.integer(4)),
                                     spec.input_width);
    const int shape = c % 4;
    auto loss = [&](Tape& t) {
      DiffNode y = forward_mlp(spec, store, "net", t.constant(x));
      switch (shape) {
        case 0: return mean(square(y));
        case 1: return sum(tanh(y));
        case 2: return mean(exp(y * 0.3));
        default: return sum(softplus(y));
      }
    };
    fd_audit(store, "mlp" + std::to_string(c), loss, mlp_stats);
  }
  out.push_back(fd_result("network losses vs finite differences", mlp_stats, tol));

  FdStats lp_stats;
  for (int c = 0; c < 24; ++c) {
    const PolicyFamily family =
        c < 12 ? PolicyFamily::Gaussian : PolicyFamily::Exponential;
    PolicySpec spec = small_policy_spec(family, 4 + 4 * static_cast<int>(cfg.integer(2)),
                                        1 + static_cast<int>(cfg.integer(2)), 2, 4);
    ParameterStore store;
    Policy policy = init_policy(store, spec, cfg);
    jitter_store(store, 0.2, cfg);
    const Tensor s = cfg.uniform_sym(3, spec.state_dim);
    Tensor a0;
    {
      Tape t;
      Tensor noise = draw_policy_noise(policy, 3, cfg);
      a0 = sample_action(policy, store, t.constant(s), noise).action.value();
    }
    auto loss = [&](Tape& t) {
      return sum(log_prob_of(policy, store, t.constant(s), a0));
    };
    fd_audit(store, "logp" + std::to_string(c), loss, lp_stats);
  }
  out.push_back(
      fd_result("fixed-action log-densities vs finite differences", lp_stats, tol));

  FdStats samp_stats;
  for (int c = 0; c < 18; ++c) {
    const PolicyFamily family = c % 3 == 0 ? PolicyFamily::Gaussian
                                : c % 3 == 1 ? PolicyFamily::Exponential
                                             : PolicyFamily::Flow;
    PolicySpec spec = small_policy_spec(family, 4, 1, 1 + static_cast<int>(cfg.integer(2)), 4);
    ParameterStore store;
    Policy policy = init_policy(store, spec, cfg);
    jitter_store(store, family == PolicyFamily::Flow ? 0.3 : 0.2, cfg);
    const Tensor s = cfg.uniform_sym(3, spec.state_dim);
    const Tensor noise = draw_policy_noise(policy, 3, cfg);
    auto loss = [&](Tape& t) {
      ActionSample smp = sample_action(policy, store, t.constant(s), noise);
      return mean(smp.log_prob) + mean(square(smp.action));
    };
    fd_audit(store, "sample" + std::to_string(c), loss, samp_stats);
  }
  out.push_back(
      fd_result("sampling paths vs finite differences", samp_stats, tol));

  FdStats flow_stats;
  for (int c = 0; c < 12; ++c) {
    FlowConfig fc;
    fc.depth = 1 + static_cast<int>(cfg.integer(3));
    fc.hidden_width = 4 + 2 * static_cast<int>(cfg.integer(2));
    const int dim = 2 + static_cast<int>(cfg.integer(3));
    ParameterStore store;
    RngStream init_rng(cfg.integer(1u << 30));
    FlowStack stack = init_flow_stack(store, "f", dim, fc, init_rng);
    jitter_store(store, 0.4, cfg);
    const Tensor z = cfg.normal(3, dim);
    auto loss = [&](Tape& t) {
      FlowResult r = flow_forward(stack, store, t.constant(z));
      return mean(square(r.output)) + mean(r.log_det);
    };
    fd_audit(store, "flow" + std::to_string(c), loss, flow_stats);
  }
  out.push_back(
      fd_result("coupling stacks vs finite differences", flow_stats, tol));

  FdStats critic_stats;
  for (int c = 0; c < 12; ++c) {
    SacConfig sac;
    sac.critic_hidden = 6;
    sac.critic_layers = 2;
    CriticSet critics = init_critics(2, 2, sac, cfg);
    const PolicyFamily family = c % 3 == 0 ? PolicyFamily::Gaussian
                                : c % 3 == 1 ? PolicyFamily::Exponential
                                             : PolicyFamily::Flow;
    PolicySpec spec = small_policy_spec(family, 4, 1, 2, 4);
    ParameterStore pstore;
    Policy policy = init_policy(pstore, spec, cfg);
    jitter_store(pstore, family == PolicyFamily::Flow ? 0.3 : 0.2, cfg);
    jitter_store(critics.q, 0.2, cfg);
    jitter_store(critics.v, 0.2, cfg);
    Batch batch;
    batch.s = cfg.uniform_sym(4, 2);
    batch.a = cfg.uniform_sym(4, 2);
    batch.r = cfg.normal(4, 1);
    batch.s2 = cfg.uniform_sym(4, 2);
    batch.done = Tensor(4, 1);
    batch.done[0] = 1.0;
    const std::uint64_t noise_seed = cfg.integer(1u << 30);
    auto q_part = [&](Tape& t) {
      RngStream r(noise_seed);
      return critic_losses(t, batch, critics, policy, pstore, 0.2, 0.99, r).q_loss;
    };
    auto v_part = [&](Tape& t) {
      RngStream r(noise_seed);
      return critic_losses(t, batch, critics, policy, pstore, 0.2, 0.99, r).v_loss;
    };
    fd_audit(critics.q, "qloss" + std::to_string(c), q_part, critic_stats);
    fd_audit(critics.v, "vloss" + std::to_string(c), v_part, critic_stats);
  }
  out.push_back(
      fd_result("critic losses vs finite differences", critic_stats, tol));

  FdStats actor_stats;
  for (int c = 0; c < 12; ++c) {
    SacConfig sac;
    sac.critic_hidden = 6;
    sac.critic_layers = 2;
    CriticSet critics = init_critics(2, 2, sac, cfg);
    const PolicyFamily family = c % 3 == 0 ? PolicyFamily::Gaussian
                                : c % 3 == 1 ? PolicyFamily::Exponential
                                             : PolicyFamily::Flow;
    PolicySpec spec = small_policy_spec(family, 4, 1, 2, 4);
    ParameterStore pstore;
    Policy policy = init_policy(pstore, spec, cfg);
    jitter_store(pstore, family == PolicyFamily::Flow ? 0.3 : 0.2, cfg);
    jitter_store(critics.q, 0.2, cfg);
    jitter_store(critics.v, 0.2, cfg);
    Batch batch;
    batch.s = cfg.uniform_sym(4, 2);
    batch.a = cfg.uniform_sym(4, 2);
    batch.r = cfg.normal(4, 1);
    batch.s2 = cfg.uniform_sym(4, 2);
    batch.done = Tensor(4, 1);
    if (c < 9) {
      const std::uint64_t noise_seed = cfg.integer(1u << 30);
      auto loss = [&](Tape& t) {
        RngStream r(noise_seed);
        return actor_loss(t, batch, critics, policy, pstore, 0.2,
                          Estimator::Pathwise, r)
            .loss;
      };
      fd_audit(pstore, "actor" + std::to_string(c), loss, actor_stats);
      fd_audit(critics.q, "actorq" + std::to_string(c), loss, actor_stats);
    } else {
      // Score-function path: the weight is the stop-gradient factor the
      // estimator holds constant, so it enters here as a frozen tensor.
      Tensor a0, w0;
      {
        Tape t;
        Tensor noise = draw_policy_noise(policy, 4, cfg);
        ActionSample smp =
            sample_action(policy, pstore, t.constant(batch.s), noise);
        a0 = smp.action.value();
        DiffNode sa = concat_cols(t.constant(batch.s), t.constant(a0));
        DiffNode q1 = forward_mlp(critics.q_spec, critics.q, "q1", sa);
        DiffNode q2 = forward_mlp(critics.q_spec, critics.q, "q2", sa);
        w0 = (smp.log_prob * 0.2 - min_elem(q1, q2)).value();
      }
      auto loss = [&](Tape& t) {
        DiffNode lp = log_prob_of(policy, pstore, t.constant(batch.s), a0);
        return mean(lp * t.constant(w0));
      };
      fd_audit(pstore, "score" + std::to_string(c), loss, actor_stats);
    }
  }
  out.push_back(
      fd_result("actor losses vs finite differences", actor_stats, tol));

  const long long total_configs = mlp_stats.configs + lp_stats.configs +
                                  samp_stats.configs + flow_stats.configs +
                                  critic_stats.configs + actor_stats.configs;
  CheckResult count;
  count.name = "at least 100 random configurations audited";
  count.passed = total_configs >= 100;
  count.detail = std::to_string(total_configs) + " configs";
  out.push_back(count);
  return out;
}

// --- flow correctness -------------------------------------------------------
//
// Invertibility of the coupling stack, the analytic log-determinant against a
// numerical Jacobian in two dimensions, and unit probability mass of the flow
// policy over the action square.
inline std::vector<CheckResult> flow_correctness_suite(std::uint64_t seed) {
  using check_detail::fmt_sci;
  using check_detail::jitter_store;
  RngStream cfg(seed);
  std::vector<CheckResult> out;

  double worst_round_trip = 0.0;
  for (int c = 0; c < 20; ++c) {
    FlowConfig fc;
    fc.depth = 1 + static_cast<int>(cfg.integer(4));
    fc.hidden_width = 4 + 2 * static_cast<int>(cfg.integer(3));
    const int dim = 2 + static_cast<int>(cfg.integer(2));
    ParameterStore store;
    FlowStack stack = init_flow_stack(store, "f", dim, fc, cfg);
    jitter_store(store, 0.8, cfg);
    stack.final_squash = false;
    const Tensor z = cfg.normal(50, dim);
    Tensor y;
    {
      Tape tape;
      y = flow_forward(stack, store, tape.constant(z)).output.value();
    }
    const Tensor back = flow_inverse_couplings(stack, store, y);
    for (int i = 0; i < z.size(); ++i)
      worst_round_trip = std::max(worst_round_trip, std::fabs(z[i] - back[i]));
  }
  CheckResult rt;
  rt.name = "coupling stack round trip below 1e-9";
  rt.passed = worst_round_trip < 1e-9;
  rt.detail = "20 configs, 50 draws each, max |z - inv(fwd(z))| " +
              fmt_sci(worst_round_trip);
  out.push_back(rt);

  double worst_logdet = 0.0;
  long long draws = 0;
  const double h = 1e-6;
  for (int c = 0; c < 10; ++c) {
    FlowConfig fc;
    fc.depth = 1 + static_cast<int>(cfg.integer(3));
    fc.hidden_width = 4 + 2 * static_cast<int>(cfg.integer(3));
    ParameterStore store;
    FlowStack stack = init_flow_stack(store, "f", 2, fc, cfg);
    jitter_store(store, 0.25, cfg);
    auto transform = [&](const Tensor& z) {
      Tape tape;
      return flow_forward(stack, store, tape.constant(z)).output.value();
    };
    for (int d = 0; d < 100; ++d) {
      Tensor z = cfg.normal(1, 2);
      z[0] *= 0.8;
      z[1] *= 0.8;
      double analytic;
      {
        Tape tape;
        analytic = flow_forward(stack, store, tape.constant(z)).log_det.item();
      }
      double jac[2][2];
      for (int k = 0; k < 2; ++k) {
        Tensor zp = z, zm = z;
        zp[k] += h;
        zm[k] -= h;
        const Tensor fp = transform(zp);
        const Tensor fm = transform(zm);
        for (int rdim = 0; rdim < 2; ++rdim)
          jac[rdim][k] = (fp[rdim] - fm[rdim]) / (2.0 * h);
      }
      const double det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
      const double numeric = std::log(std::fabs(det));
      worst_logdet = std::max(worst_logdet, std::fabs(numeric - analytic));
      ++draws;
    }
  }
  CheckResult ld;
  ld.name = "analytic log-det vs numerical jacobian within 1e-5";
  ld.passed = worst_logdet < 1e-5 && draws >= 1000;
  ld.detail = std::to_string(draws) + " draws, max |diff| " + fmt_sci(worst_logdet);
  out.push_back(ld);

  double mass_min = 1e300, mass_max = -1e300;
  const int grid = 512;
  const double cell = 2.0 / grid;
  for (int c = 0; c < 3; ++c) {
    PolicySpec spec;
    spec.family = PolicyFamily::Flow;
    spec.encoder_hidden = 8;
    spec.encoder_layers = 1;
    spec.flow.depth = c == 2 ? 4 : 2;
    spec.flow.hidden_width = 8;
    ParameterStore store;
    Policy policy = init_policy(store, spec, cfg);
    if (c > 0) jitter_store(store, c == 1 ? 0.4 : 0.25, cfg, "pi.flow");
    const Tensor state = cfg.uniform_sym(1, 2);
    double mass = 0.0;
    const int rows_per_batch = 4096;
    Tensor s_tile(rows_per_batch, 2);
    for (int r = 0; r < rows_per_batch; ++r) {
      s_tile.at(r, 0) = state[0];
      s_tile.at(r, 1) = state[1];
    }
    Tensor actions(rows_per_batch, 2);
    int filled = 0;
    auto flush = [&](int rows) {
      if (rows == 0) return;
      Tape tape;
      Tensor s_use = s_tile, a_use = actions;
      if (rows != rows_per_batch) {
        s_use = Tensor(rows, 2);
        a_use = Tensor(rows, 2);
        for (int r = 0; r < rows; ++r) {
          s_use.at(r, 0) = s_tile.at(r, 0);
          s_use.at(r, 1) = s_tile.at(r, 1);
          a_use.at(r, 0) = actions.at(r, 0);
          a_use.at(r, 1) = actions.at(r, 1);
        }
      }
      const Tensor lp =
          log_prob_of(policy, store, tape.constant(s_use), a_use).value();
      for (int r = 0; r < rows; ++r) mass += std::exp(lp[r]) * cell * cell;
    };
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        actions.at(filled, 0) = -1.0 + (i + 0.5) * cell;
        actions.at(filled, 1) = -1.0 + (j + 0.5) * cell;
        if (++filled == rows_per_batch) {
          flush(filled);
          filled = 0;
        }
      }
    }
    flush(filled);
    mass_min = std::min(mass_min, mass);
    mass_max = std::max(mass_max, mass);
  }
  CheckResult mq;
  mq.name = "flow policy mass on the action square in [0.98, 1.02]";
  mq.passed = mass_min >= 0.98 && mass_max <= 1.02;
  mq.detail = "3 configs, 512x512 midpoint rule, mass in [" +
              fmt_sci(mass_min) + ", " + fmt_sci(mass_max) + "]";
  out.push_back(mq);
  return out;
}

// --- identity at initialization ---------------------------------------------
//
// With zero-initialized coupling output layers the flow policy must reproduce
// the squashed Gaussian exactly: same actions and log-densities under shared
// noise, and same scores for shared fixed actions.
inline std::vector<CheckResult> identity_at_init_suite(std::uint64_t seed) {
  using check_detail::fmt_sci;
  RngStream cfg(seed);
  double worst_action = 0.0, worst_lp = 0.0, worst_score = 0.0;
  for (int c = 0; c < 5; ++c) {
    const std::uint64_t init_seed = cfg.integer(1u << 30);
    PolicySpec gspec;
    gspec.family = PolicyFamily::Gaussian;
    gspec.encoder_hidden = 8;
    gspec.encoder_layers = 2;
    PolicySpec fspec = gspec;
    fspec.family = PolicyFamily::Flow;
    fspec.flow.depth = 3;
    fspec.flow.hidden_width = 8;

    ParameterStore gstore, fstore;
    RngStream g_rng(init_seed), f_rng(init_seed);
    Policy gpol = init_policy(gstore, gspec, g_rng);
    Policy fpol = init_policy(fstore, fspec, f_rng);

    const Tensor s = cfg.uniform_sym(25, 2);
    const Tensor noise = cfg.normal(25, 2);
    Tensor ga, fa;
    {
      Tape t;
      ActionSample gs = sample_action(gpol, gstore, t.constant(s), noise);
      ActionSample fs = sample_action(fpol, fstore, t.constant(s), noise);
      ga = gs.action.value();
      fa = fs.action.value();
      const Tensor glp = gs.log_prob.value();
      const Tensor flp = fs.log_prob.value();
      for (int i = 0; i < ga.size(); ++i)
        worst_action = std::max(worst_action, std::fabs(ga[i] - fa[i]));
      for (int i = 0; i < glp.size(); ++i)
        worst_lp = std::max(worst_lp, std::fabs(glp[i] - flp[i]));
    }
    {
      Tape t;
      const Tensor glp =
          log_prob_of(gpol, gstore, t.constant(s), ga).value();
      const Tensor flp =
          log_prob_of(fpol, fstore, t.constant(s), ga).value();
      for (int i = 0; i < glp.size(); ++i)
        worst_score = std::max(worst_score, std::fabs(glp[i] - flp[i]));
    }
  }
  std::vector<CheckResult> out;
  CheckResult act;
  act.name = "shared-noise actions match to 1e-10";
  act.passed = worst_action <= 1e-10;
  act.detail = "max |a_flow - a_gauss| " + fmt_sci(worst_action);
  out.push_back(act);
  CheckResult lp;
  lp.name = "shared-noise log-densities match to 1e-10";
  lp.passed = worst_lp <= 1e-10;
  lp.detail = "max |diff| " + fmt_sci(worst_lp);
  out.push_back(lp);
  CheckResult sc;
  sc.name = "fixed-action scores match to 1e-10";
  sc.passed = worst_score <= 1e-10;
  sc.detail = "max |diff| " + fmt_sci(worst_score);
  out.push_back(sc);
  return out;
}

// --- environment invariants ---------------------------------------------------
inline std::vector<CheckResult> environment_suite(std::uint64_t seed) {
  using check_detail::follow_waypoints;
  using check_detail::inside_any_wall;
  using check_detail::random_trajectory;
  RngStream rng(seed);
  std::vector<CheckResult> out;

  long long violations = 0;
  long long probed = 0;
  for (LayoutKind kind : {LayoutKind::Sparse, LayoutKind::Dense}) {
    const GridLayout layout = make_layout(kind);
    EnvState state = env_reset(layout).first;
    for (int t = 0; t < 50000; ++t) {
      if (t % 500 == 0) {
        double px, py;
        do {
          px = rng.uniform01() * layout.width;
          py = rng.uniform01() * layout.height;
        } while (inside_any_wall(layout, px, py));
        state = EnvState{px, py, 0};
      }
      const double ax = 2.0 * rng.uniform01() - 1.0;
      const double ay = 2.0 * rng.uniform01() - 1.0;
      auto [next, outcome] = env_step(layout, state, ax, ay);
      state = outcome.done ? env_reset(layout).first : next;
      const bool bad = inside_any_wall(layout, next.x, next.y) ||
                       next.x < 0.0 || next.x > layout.width ||
                       next.y < 0.0 || next.y > layout.height;
      if (bad) ++violations;
      ++probed;
    }
  }
  CheckResult walls;
  walls.name = "no wall or boundary penetration in 1e5 random steps";
  walls.passed = violations == 0 && probed == 100000;
  walls.detail = std::to_string(violations) + " violations in " +
                 std::to_string(probed) + " steps";
  out.push_back(walls);

  bool lengths_ok = true;
  for (LayoutKind kind : {LayoutKind::Sparse, LayoutKind::Dense}) {
    const GridLayout layout = make_layout(kind);
    for (int ep = 0; ep < 20 && lengths_ok; ++ep) {
      EnvState state = env_reset(layout).first;
      for (int t = 1; t <= layout.max_episode_steps; ++t) {
        const double ax = 2.0 * rng.uniform01() - 1.0;
        const double ay = 2.0 * rng.uniform01() - 1.0;
        auto [next, outcome] = env_step(layout, state, ax, ay);
        state = next;
        const bool should_end = t == layout.max_episode_steps;
        if (outcome.done != should_end || state.steps != t) {
          lengths_ok = false;
          break;
        }
      }
    }
  }
  CheckResult len;
  len.name = "episodes end exactly at 500 steps";
  len.passed = lengths_ok;
  len.detail = "40 random episodes across both arenas";
  out.push_back(len);

  const std::vector<std::pair<double, double>> path = {
      {45.0, 25.0}, {95.0, 25.0}, {125.0, 25.0}};
  int reached = -1;
  const GridLayout sparse = make_layout(LayoutKind::Sparse);
  const double sparse_ret = follow_waypoints(sparse, path, &reached);
  const bool sparse_ok = reached > 0 && reached < 120 &&
                         sparse_ret > 100.0 * (sparse.max_episode_steps - 120);
  int sub_reached = -1;
  const GridLayout dense = make_layout(LayoutKind::Dense);
  const double dense_ret = follow_waypoints(dense, path, nullptr);
  const double sub_ret =
      follow_waypoints(dense, {{40.0, 50.0}}, &sub_reached);
  const bool dense_ok = dense_ret >= sparse_ret - 1000.0 && sub_reached > 0 &&
                        sub_reached < 15 &&
                        sub_ret > 5.0 * (dense.max_episode_steps - 15);
  CheckResult solv;
  solv.name = "scripted waypoint runs solve both arenas";
  solv.passed = sparse_ok && dense_ok;
  {
    std::ostringstream os;
    os << "sparse return " << sparse_ret << " (goal at step " << reached
       << "), dense return " << dense_ret << ", sub-goal return " << sub_ret;
    solv.detail = os.str();
  }
  out.push_back(solv);

  bool det_ok = true;
  for (LayoutKind kind : {LayoutKind::Sparse, LayoutKind::Dense}) {
    const GridLayout layout = make_layout(kind);
    const auto a = random_trajectory(layout, seed + 11, 2000);
    const auto b = random_trajectory(layout, seed + 11, 2000);
    const auto c = random_trajectory(layout, seed + 12, 2000);
    if (a.xs != b.xs || a.ys != b.ys || a.rewards != b.rewards) det_ok = false;
    if (a.xs == c.xs && a.ys == c.ys) det_ok = false;
  }
  CheckResult det;
  det.name = "identical seeds give identical trajectories";
  det.passed = det_ok;
  det.detail = "2000 steps per arena, exact float equality";
  out.push_back(det);
  return out;
}

// --- harness invariants -------------------------------------------------------
inline std::vector<CheckResult> harness_suite(std::uint64_t seed,
                                              const std::string& scratch_dir) {
  namespace fs = std::filesystem;
  std::vector<CheckResult> out;
  const fs::path root(scratch_dir);
  fs::remove_all(root);
  fs::create_directories(root);

  RunConfig cfg;
  cfg.layout = LayoutKind::Sparse;
  cfg.family = PolicyFamily::Gaussian;
  cfg.estimator = Estimator::Pathwise;
  cfg.seed = seed;
  cfg.total_env_steps = 600;
  cfg.eval_interval = 200;
  cfg.eval_episodes = 2;
  cfg.checkpoint_interval = 300;
  cfg.sac.batch_size = 16;
  cfg.sac.warmup_steps = 200;
  cfg.sac.buffer_capacity = 4096;
  cfg.sac.critic_hidden = 8;
  cfg.sac.critic_layers = 1;
  cfg.encoder_hidden = 8;
  cfg.encoder_layers = 1;

  RunConfig a_cfg = cfg;
  a_cfg.out_dir = (root / "a").string();
  const RunArtifacts a = run_experiment(a_cfg);

  CheckResult conserve;
  conserve.name = "heatmap counts equal training steps";
  const VisitationGrid reread =
      visitation_from_csv(read_text_file(a.heatmap_csv_path));
  conserve.passed = a.visitation.total() == a.steps_completed &&
                    reread.total() == a.steps_completed &&
                    a.steps_completed == cfg.total_env_steps && !a.failed;
  conserve.detail = std::to_string(reread.total()) + " counts over " +
                    std::to_string(a.steps_completed) + " steps";
  out.push_back(conserve);

  RunConfig b_cfg = cfg;
  b_cfg.out_dir = (root / "b").string();
  const RunArtifacts b = run_experiment(b_cfg);
  CheckResult repro;
  repro.name = "same config and seed reproduce artifacts byte for byte";
  repro.passed =
      read_text_file(a.curve_path) == read_text_file(b.curve_path) &&
      read_text_file(a.heatmap_csv_path) == read_text_file(b.heatmap_csv_path) &&
      read_text_file(a.checkpoint_path) == read_text_file(b.checkpoint_path);
  repro.detail = "curve, heatmap, and checkpoint compared";
  out.push_back(repro);

  RunConfig head_cfg = cfg;
  head_cfg.total_env_steps = 300;
  head_cfg.out_dir = (root / "head").string();
  const RunArtifacts head = run_experiment(head_cfg);
  RunConfig tail_cfg = cfg;
  tail_cfg.out_dir = (root / "tail").string();
  tail_cfg.resume_from = head.checkpoint_path;
  const RunArtifacts tail = run_experiment(tail_cfg);
  CheckResult resume;
  resume.name = "checkpoint resume rejoins the uninterrupted trajectory";
  resume.passed =
      read_text_file(a.curve_path) == read_text_file(tail.curve_path) &&
      read_text_file(a.heatmap_csv_path) ==
          read_text_file(tail.heatmap_csv_path) &&
      read_text_file(a.checkpoint_path) == read_text_file(tail.checkpoint_path);
  resume.detail = "full run vs 300-step head plus resumed tail";
  out.push_back(resume);

  const std::vector<std::vector<CurvePoint>> logs = {
      {{100, 0.0, 0.0}, {200, 4.0, 0.0}},
      {{100, 10.0, 0.0}, {200, 6.0, 0.0}},
      {{100, 20.0, 0.0}, {200, 11.0, 0.0}}};
  const std::vector<CurvePoint> agg = aggregate_runs(logs);
  const bool agg_ok = agg.size() == 2 && agg[0].env_step == 100 &&
                      agg[0].mean_return == 10.0 &&
                      std::fabs(agg[0].std_return - 8.16496580927726) < 1e-12 &&
                      agg[1].env_step == 200 && agg[1].mean_return == 7.0 &&
                      std::fabs(agg[1].std_return -
                                std::sqrt(26.0 / 3.0)) < 1e-12;
  CheckResult agg_check;
  agg_check.name = "aggregation reproduces hand-computed mean and std";
  agg_check.passed = agg_ok;
  agg_check.detail = "three hand-built logs, population statistics";
  out.push_back(agg_check);

  fs::remove_all(root);
  return out;
}

}  // namespace softrl
