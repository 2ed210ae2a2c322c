// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: seeded configuration, the act/store/update loop,
// periodic stochastic evaluation, visitation counting, rolling checkpoints,
// and atomic artifact emission. One run is one single-threaded process;
// (config, seed) determines every artifact byte within one build.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "softrl/checkpoint.hpp"
#include "softrl/gridworld.hpp"
#include "softrl/heatmap.hpp"
#include "softrl/policy.hpp"
#include "softrl/sac.hpp"
#include "softrl/textio.hpp"

namespace softrl {

struct RunConfig {
  LayoutKind layout = LayoutKind::Sparse;
  PolicyFamily family = PolicyFamily::Gaussian;
  Estimator estimator = Estimator::Pathwise;
  std::uint64_t seed = 0;
  long long total_env_steps = 100000;
  int eval_interval = 1000;
  int eval_episodes = 5;
  int checkpoint_interval = 10000;
  SacConfig sac;
  int encoder_hidden = 64;
  int encoder_layers = 2;
  FlowConfig flow;
  double clip_bound = 1.0;
  std::string out_dir = "run";
  std::string resume_from;  // checkpoint path; empty starts fresh

  PolicySpec policy_spec() const {
    PolicySpec spec;
    spec.family = family;
    spec.estimator = estimator;
    spec.encoder_hidden = encoder_hidden;
    spec.encoder_layers = encoder_layers;
    spec.flow = flow;
    spec.clip_bound = clip_bound;
    return spec;
  }

  void validate() const {
    if (total_env_steps < 0)
      throw std::invalid_argument("config: negative step budget");
    if (eval_interval <= 0 || eval_episodes <= 0)
      throw std::invalid_argument("config: evaluation cadence must be positive");
    if (checkpoint_interval < 0)
      throw std::invalid_argument("config: negative checkpoint interval");
    if (sac.batch_size <= 0 || sac.warmup_steps < 0 || sac.buffer_capacity == 0)
      throw std::invalid_argument("config: bad replay settings");
    if (encoder_hidden <= 0 || encoder_layers <= 0)
      throw std::invalid_argument("config: bad encoder shape");
    if (family == PolicyFamily::Flow &&
        (flow.depth <= 0 || flow.hidden_width <= 0))
      throw std::invalid_argument("config: bad flow shape");
    if (clip_bound <= 0.0)
      throw std::invalid_argument("config: clip bound must be positive");
    if (out_dir.empty()) throw std::invalid_argument("config: empty out dir");
  }
};

struct CurvePoint {
  long long env_step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct RunArtifacts {
  std::vector<CurvePoint> curve;
  VisitationGrid visitation;
  long long steps_completed = 0;
  bool failed = false;
  std::string failure;
  double final_mean_return = 0.0;
  std::string curve_path;
  std::string heatmap_csv_path;
  std::string heatmap_pgm_path;
  std::string checkpoint_path;
  std::string summary_path;
};

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "env_step,mean_return,std_return\n";
  for (const CurvePoint& p : curve) {
    out += std::to_string(p.env_step);
    out += ',';
    out += format_g17(p.mean_return);
    out += ',';
    out += format_g17(p.std_return);
    out += '\n';
  }
  return out;
}

inline std::vector<CurvePoint> curve_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "env_step,mean_return,std_return")
    throw std::invalid_argument("curve csv: missing header");
  std::vector<CurvePoint> curve;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    char trailing = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf%c", &p.env_step,
                    &p.mean_return, &p.std_return, &trailing) != 3)
      throw std::invalid_argument("curve csv: malformed row: " + line);
    if (!curve.empty() && p.env_step <= curve.back().env_step)
      throw std::invalid_argument("curve csv: env_step not increasing");
    curve.push_back(p);
  }
  return curve;
}

// Per-step mean and population standard deviation across runs. All logs
// must share one step grid.
inline std::vector<CurvePoint> aggregate_runs(
    const std::vector<std::vector<CurvePoint>>& logs) {
  if (logs.empty()) throw std::invalid_argument("aggregate: no logs");
  const std::size_t n = logs.front().size();
  for (const std::vector<CurvePoint>& log : logs) {
    if (log.size() != n)
      throw std::invalid_argument("aggregate: step grids differ in length");
    for (std::size_t i = 0; i < n; ++i)
      if (log[i].env_step != logs.front()[i].env_step)
        throw std::invalid_argument("aggregate: step grids disagree");
  }
  std::vector<CurvePoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const std::vector<CurvePoint>& log : logs) mean += log[i].mean_return;
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (const std::vector<CurvePoint>& log : logs) {
      const double d = log[i].mean_return - mean;
      var += d * d;
    }
    var /= static_cast<double>(logs.size());
    out[i] = {logs.front()[i].env_step, mean, std::sqrt(var)};
  }
  return out;
}

namespace detail {

struct Trainer {
  GridLayout layout;
  RngStream rng;
  ParameterStore pi;
  Policy policy;
  CriticSet critics;
  ReplayBuffer buffer;
  EnvState env;
  VisitationGrid visitation;
  std::vector<CurvePoint> curve;
  long long step = 0;
  Tape tape;

  Trainer(const RunConfig& config)
      : layout(make_layout(config.layout)),
        rng(config.seed),
        buffer(config.sac.buffer_capacity, 2, 2) {
    policy = init_policy(pi, config.policy_spec(), rng);
    critics = init_critics(2, 2, config.sac, rng);
    env = env_reset(layout).first;
  }
};

inline Tensor current_observation(const Trainer& t) {
  return observe(t.layout, t.env);
}

// One stochastic action for a single observation.
inline Tensor act(Trainer& t, const Tensor& obs) {
  t.tape.clear();
  DiffNode s = t.tape.constant(obs);
  Tensor noise = draw_policy_noise(t.policy, 1, t.rng);
  ActionSample sample = sample_action(t.policy, t.pi, s, noise);
  Tensor a = sample.action.value();
  t.tape.clear();
  return a;
}

// Mean and population std of undiscounted returns over full episodes under
// the stochastic policy; no learning, no visitation counting.
inline std::pair<double, double> evaluate(Trainer& t, int episodes) {
  std::vector<double> returns(episodes, 0.0);
  for (int e = 0; e < episodes; ++e) {
    EnvState s = env_reset(t.layout).first;
    double total = 0.0;
    bool done = false;
    while (!done) {
      Tensor a = act(t, observe(t.layout, s));
      auto [next, out] = env_step(t.layout, s, a[0], a[1]);
      total += out.reward;
      s = next;
      done = out.done;
    }
    returns[e] = total;
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= episodes;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= episodes;
  return {mean, std::sqrt(var)};
}

inline Archive trainer_to_archive(const Trainer& t, const RunConfig& config) {
  Archive a;
  Tensor fingerprint(1, 5);
  fingerprint[0] = static_cast<double>(config.layout == LayoutKind::Dense);
  fingerprint[1] = static_cast<double>(static_cast<int>(config.family));
  fingerprint[2] = static_cast<double>(static_cast<int>(config.estimator));
  fingerprint[3] = static_cast<double>(config.seed);
  fingerprint[4] = static_cast<double>(config.sac.batch_size);
  a.add("config.fingerprint", fingerprint);

  Tensor step(1, 1);
  step[0] = static_cast<double>(t.step);
  a.add("trainer.step", step);

  Tensor env(1, 3);
  env[0] = t.env.x;
  env[1] = t.env.y;
  env[2] = static_cast<double>(t.env.steps);
  a.add("env.state", env);

  a.add("rng.words", rng_to_tensor(t.rng));

  store_to_archive(a, "pi", t.pi);
  store_to_archive(a, "q", t.critics.q);
  store_to_archive(a, "v", t.critics.v);
  store_to_archive(a, "v_target", t.critics.v_target);

  const int n = static_cast<int>(t.buffer.size());
  Tensor shape(1, 2);
  shape[0] = static_cast<double>(t.buffer.size());
  shape[1] = static_cast<double>(t.buffer.cursor());
  a.add("buffer.shape", shape);
  Tensor bs(n, 2), ba(n, 2), bs2(n, 2), br(n, 1), bd(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      bs.at(i, c) = t.buffer.raw_states()[i * 2 + c];
      ba.at(i, c) = t.buffer.raw_actions()[i * 2 + c];
      bs2.at(i, c) = t.buffer.raw_next_states()[i * 2 + c];
    }
    br[i] = t.buffer.raw_rewards()[i];
    bd[i] = static_cast<double>(t.buffer.raw_dones()[i]);
  }
  a.add("buffer.s", bs);
  a.add("buffer.a", ba);
  a.add("buffer.s2", bs2);
  a.add("buffer.r", br);
  a.add("buffer.done", bd);

  Tensor curve(static_cast<int>(t.curve.size()), 3);
  for (std::size_t i = 0; i < t.curve.size(); ++i) {
    curve.at(static_cast<int>(i), 0) = static_cast<double>(t.curve[i].env_step);
    curve.at(static_cast<int>(i), 1) = t.curve[i].mean_return;
    curve.at(static_cast<int>(i), 2) = t.curve[i].std_return;
  }
  a.add("curve", curve);

  Tensor grid(t.visitation.cells_y, t.visitation.cells_x);
  for (int iy = 0; iy < t.visitation.cells_y; ++iy)
    for (int ix = 0; ix < t.visitation.cells_x; ++ix)
      grid.at(iy, ix) = static_cast<double>(t.visitation.at(ix, iy));
  a.add("visitation", grid);
  return a;
}

inline void trainer_from_archive(const Archive& a, const RunConfig& config,
                                 Trainer& t) {
  const Tensor& fingerprint = a.at("config.fingerprint");
  if (fingerprint[0] != static_cast<double>(config.layout == LayoutKind::Dense) ||
      fingerprint[1] != static_cast<double>(static_cast<int>(config.family)) ||
      fingerprint[2] != static_cast<double>(static_cast<int>(config.estimator)) ||
      fingerprint[3] != static_cast<double>(config.seed) ||
      fingerprint[4] != static_cast<double>(config.sac.batch_size))
    throw std::runtime_error(
        "checkpoint: configuration does not match this run");

  t.step = static_cast<long long>(a.at("trainer.step")[0]);
  const Tensor& env = a.at("env.state");
  t.env.x = env[0];
  t.env.y = env[1];
  t.env.steps = static_cast<int>(env[2]);

  rng_from_tensor(a.at("rng.words"), t.rng);
  store_from_archive(a, "pi", t.pi);
  store_from_archive(a, "q", t.critics.q);
  store_from_archive(a, "v", t.critics.v);
  store_from_archive(a, "v_target", t.critics.v_target);

  const Tensor& shape = a.at("buffer.shape");
  const std::size_t n = static_cast<std::size_t>(shape[0]);
  const Tensor& bs = a.at("buffer.s");
  const Tensor& ba = a.at("buffer.a");
  const Tensor& bs2 = a.at("buffer.s2");
  const Tensor& br = a.at("buffer.r");
  const Tensor& bd = a.at("buffer.done");
  std::vector<std::uint8_t> dones(n);
  for (std::size_t i = 0; i < n; ++i)
    dones[i] = bd[static_cast<int>(i)] != 0.0 ? 1 : 0;
  t.buffer.restore(n, static_cast<std::size_t>(shape[1]), bs.data, ba.data,
                   bs2.data, br.data, dones);

  const Tensor& curve = a.at("curve");
  t.curve.clear();
  for (int i = 0; i < curve.rows; ++i)
    t.curve.push_back({static_cast<long long>(curve.at(i, 0)), curve.at(i, 1),
                       curve.at(i, 2)});

  const Tensor& grid = a.at("visitation");
  if (grid.rows != t.visitation.cells_y || grid.cols != t.visitation.cells_x)
    throw std::runtime_error("checkpoint: visitation shape mismatch");
  for (int iy = 0; iy < grid.rows; ++iy)
    for (int ix = 0; ix < grid.cols; ++ix)
      t.visitation.at(ix, iy) = static_cast<std::int64_t>(grid.at(iy, ix));
}

}  // namespace detail

inline std::string run_summary_text(const RunConfig& config,
                                    const RunArtifacts& artifacts) {
  std::ostringstream os;
  os << "layout: " << layout_kind_name(config.layout) << "\n";
  os << "policy: " << family_name(config.family) << "\n";
  os << "estimator: " << estimator_name(config.estimator) << "\n";
  os << "seed: " << config.seed << "\n";
  os << "total_env_steps: " << config.total_env_steps << "\n";
  os << "steps_completed: " << artifacts.steps_completed << "\n";
  os << "curve_points: " << artifacts.curve.size() << "\n";
  os << "visitation_total: " << artifacts.visitation.total() << "\n";
  os << "final_mean_return: " << format_g17(artifacts.final_mean_return) << "\n";
  os << "failed: " << (artifacts.failed ? 1 : 0) << "\n";
  os << "failure: " << artifacts.failure << "\n";
  return os.str();
}

// Runs one seeded experiment to completion (or failure) and writes every
// artifact. A non-finite loss marks the run failed and preserves partial
// artifacts instead of propagating.
inline RunArtifacts run_experiment(const RunConfig& config) {
  config.validate();
  detail::Trainer t(config);
  if (!config.resume_from.empty())
    detail::trainer_from_archive(load_archive(config.resume_from), config, t);

  RunArtifacts artifacts;
  const std::filesystem::path dir(config.out_dir);
  artifacts.curve_path = (dir / "curve.csv").string();
  artifacts.heatmap_csv_path = (dir / "heatmap.csv").string();
  artifacts.heatmap_pgm_path = (dir / "heatmap.pgm").string();
  artifacts.checkpoint_path = (dir / "checkpoint.bin").string();
  artifacts.summary_path = (dir / "summary.txt").string();

  while (t.step < config.total_env_steps && !artifacts.failed) {
    ++t.step;
    const Tensor obs = detail::current_observation(t);
    Tensor action;
    if (t.step <= config.sac.warmup_steps)
      action = t.rng.uniform_sym(1, 2);
    else
      action = detail::act(t, obs);

    auto [next, out] = env_step(t.layout, t.env, action[0], action[1]);
    Transition tr;
    tr.state = obs;
    tr.action = action;
    tr.reward = out.reward;
    tr.next_state = out.observation;
    tr.done = out.done;
    t.buffer.push(tr);
    t.visitation.record(next.x, next.y);
    t.env = out.done ? env_reset(t.layout).first : next;

    if (t.step > config.sac.warmup_steps &&
        t.buffer.size() >= static_cast<std::size_t>(config.sac.batch_size)) {
      try {
        update_step(t.tape, t.buffer, t.critics, t.policy, t.pi, config.sac,
                    t.rng);
      } catch (const std::exception& e) {
        artifacts.failed = true;
        artifacts.failure = e.what();
        break;
      }
    }

    if (t.step % config.eval_interval == 0) {
      auto [mean, sd] = detail::evaluate(t, config.eval_episodes);
      t.curve.push_back({t.step, mean, sd});
    }

    if (config.checkpoint_interval > 0 &&
        t.step % config.checkpoint_interval == 0)
      save_archive(detail::trainer_to_archive(t, config),
                   artifacts.checkpoint_path);
  }

  artifacts.curve = t.curve;
  artifacts.visitation = t.visitation;
  artifacts.steps_completed = t.step;
  if (!t.curve.empty()) artifacts.final_mean_return = t.curve.back().mean_return;

  std::filesystem::create_directories(dir);
  atomic_write_file(artifacts.curve_path, curve_to_csv(artifacts.curve));
  emit_heatmap(artifacts.visitation, artifacts.heatmap_csv_path,
               artifacts.heatmap_pgm_path);
  save_archive(detail::trainer_to_archive(t, config),
               artifacts.checkpoint_path);
  atomic_write_file(artifacts.summary_path,
                    run_summary_text(config, artifacts));
  return artifacts;
}

}  // namespace softrl
