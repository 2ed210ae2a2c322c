// SPDX-License-Identifier: Apache-2.0
//
// Command line front end.
//
// Subcommands: `train` runs one seeded experiment and writes its artifacts,
// `sweep` launches seed runs as independent child processes, `aggregate`
// merges curve logs into a mean/std curve, `heatmap` renders a visitation
// matrix as a graymap image, and `verify` runs the full property suite.

#include <sys/wait.h>
#include <unistd.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "softrl/harness.hpp"
#include "softrl/selfcheck.hpp"

namespace {

using namespace softrl;

// Option bundle mirroring RunConfig; strings hold enum-valued fields so the
// same names work from flags and from a key-value config file.
struct TrainOptions {
  std::string layout = "sparse";
  std::string policy = "gaussian";
  std::string estimator = "pathwise";
  std::uint64_t seed = 0;
  long long steps = 100000;
  std::string out = "run";
  std::string resume_from;
  int eval_interval = 1000;
  int eval_episodes = 5;
  int checkpoint_interval = 10000;
  double gamma = 0.99;
  double alpha = 0.2;
  double tau = 0.005;
  double lr = 3e-4;
  int batch_size = 256;
  std::size_t buffer_capacity = 1000000;
  int warmup_steps = 1000;
  int critic_hidden = 64;
  int critic_layers = 2;
  int encoder_hidden = 64;
  int encoder_layers = 2;
  int flow_depth = 4;
  int flow_hidden = 32;
  double clip_bound = 1.0;
  std::string config_file;

  RunConfig to_run_config() const {
    RunConfig cfg;
    cfg.layout = layout_kind_from_name(layout);
    cfg.family = family_from_name(policy);
    cfg.estimator = estimator_from_name(estimator);
    cfg.seed = seed;
    cfg.total_env_steps = steps;
    cfg.out_dir = out;
    cfg.resume_from = resume_from;
    cfg.eval_interval = eval_interval;
    cfg.eval_episodes = eval_episodes;
    cfg.checkpoint_interval = checkpoint_interval;
    cfg.sac.gamma = gamma;
    cfg.sac.alpha = alpha;
    cfg.sac.tau = tau;
    cfg.sac.lr = lr;
    cfg.sac.batch_size = batch_size;
    cfg.sac.buffer_capacity = buffer_capacity;
    cfg.sac.warmup_steps = warmup_steps;
    cfg.sac.critic_hidden = critic_hidden;
    cfg.sac.critic_layers = critic_layers;
    cfg.encoder_hidden = encoder_hidden;
    cfg.encoder_layers = encoder_layers;
    cfg.flow.depth = flow_depth;
    cfg.flow.hidden_width = flow_hidden;
    cfg.clip_bound = clip_bound;
    return cfg;
  }
};

// Registers the shared train/sweep options. Multi-word options answer to both
// dashed and underscored spellings, so config files can use the exact
// RunConfig field names.
void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--layout", o.layout, "Arena layout")
      ->check(CLI::IsMember({"dense", "sparse"}));
  cmd->add_option("--policy", o.policy, "Policy distribution family")
      ->check(CLI::IsMember({"gaussian", "exponential", "flow"}));
  cmd->add_option("--estimator", o.estimator, "Policy gradient estimator")
      ->check(CLI::IsMember({"pathwise", "reinforce"}));
  cmd->add_option("--steps,--total-env-steps,--total_env_steps", o.steps,
                  "Training environment steps");
  cmd->add_option("--eval-interval,--eval_interval", o.eval_interval,
                  "Steps between evaluation rounds");
  cmd->add_option("--eval-episodes,--eval_episodes", o.eval_episodes,
                  "Episodes per evaluation round");
  cmd->add_option("--checkpoint-interval,--checkpoint_interval",
                  o.checkpoint_interval,
                  "Steps between rolling checkpoints (0 = final only)");
  cmd->add_option("--gamma", o.gamma, "Discount factor");
  cmd->add_option("--alpha", o.alpha, "Entropy temperature");
  cmd->add_option("--tau", o.tau, "Target network mixing rate");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch-size,--batch_size", o.batch_size,
                  "Minibatch size for updates");
  cmd->add_option("--buffer-capacity,--buffer_capacity", o.buffer_capacity,
                  "Replay buffer capacity");
  cmd->add_option("--warmup-steps,--warmup_steps", o.warmup_steps,
                  "Uniform-action steps before updates start");
  cmd->add_option("--critic-hidden,--critic_hidden", o.critic_hidden,
                  "Critic hidden width");
  cmd->add_option("--critic-layers,--critic_layers", o.critic_layers,
                  "Critic hidden layer count");
  cmd->add_option("--encoder-hidden,--encoder_hidden", o.encoder_hidden,
                  "Policy encoder hidden width");
  cmd->add_option("--encoder-layers,--encoder_layers", o.encoder_layers,
                  "Policy encoder hidden layer count");
  cmd->add_option("--flow-depth,--flow_depth", o.flow_depth,
                  "Coupling layers in the flow policy");
  cmd->add_option("--flow-hidden,--flow_hidden", o.flow_hidden,
                  "Hidden width of coupling nets");
  cmd->add_option("--clip-bound,--clip_bound", o.clip_bound,
                  "Policy weight clipping bound");
  cmd->add_option("--config", o.config_file,
                  "Key-value file with the options above; flags take "
                  "precedence over file values");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Applies `key=value` lines from a config file to a subcommand's options.
// Keys use the option names (dashed or underscored). Values given on the
// command line keep precedence: a key is skipped when its option was set.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::istringstream lines(read_text_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#' || entry[0] == ';' ||
        entry[0] == '[')
      continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = trim(entry.substr(0, eq));
    std::string value = trim(entry.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (key == "config")
      throw std::invalid_argument(path + ": config files cannot nest");
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

int run_train(const TrainOptions& o) {
  const RunConfig cfg = o.to_run_config();
  const RunArtifacts art = run_experiment(cfg);
  std::cout << run_summary_text(cfg, art);
  std::cout << "curve: " << art.curve_path << "\n"
            << "heatmap: " << art.heatmap_csv_path << "\n"
            << "image: " << art.heatmap_pgm_path << "\n"
            << "checkpoint: " << art.checkpoint_path << "\n";
  return art.failed ? 1 : 0;
}

std::string self_executable(const char* argv0) {
  std::error_code ec;
  const auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (!ec) return p.string();
  return argv0;
}

int run_sweep(const std::string& exe, CLI::App* cmd, const TrainOptions& o,
              const std::vector<std::uint64_t>& seeds, int jobs,
              const std::string& out_root, const std::string& config_file) {
  std::vector<std::vector<std::string>> commands;
  for (std::uint64_t seed : seeds) {
    std::vector<std::string> args = {exe, "train"};
    if (!config_file.empty()) {
      args.push_back("--config");
      args.push_back(config_file);
    }
    // Only forward flags the user actually set, so config-file values keep
    // their precedence inside the children.
    auto forward = [&](const std::string& flag, const std::string& value) {
      if (cmd->count(flag) > 0) {
        args.push_back(flag);
        args.push_back(value);
      }
    };
    forward("--layout", o.layout);
    forward("--policy", o.policy);
    forward("--estimator", o.estimator);
    forward("--steps", std::to_string(o.steps));
    forward("--eval-interval", std::to_string(o.eval_interval));
    forward("--eval-episodes", std::to_string(o.eval_episodes));
    forward("--checkpoint-interval", std::to_string(o.checkpoint_interval));
    forward("--gamma", std::to_string(o.gamma));
    forward("--alpha", std::to_string(o.alpha));
    forward("--tau", std::to_string(o.tau));
    forward("--lr", std::to_string(o.lr));
    forward("--batch-size", std::to_string(o.batch_size));
    forward("--buffer-capacity", std::to_string(o.buffer_capacity));
    forward("--warmup-steps", std::to_string(o.warmup_steps));
    forward("--critic-hidden", std::to_string(o.critic_hidden));
    forward("--critic-layers", std::to_string(o.critic_layers));
    forward("--encoder-hidden", std::to_string(o.encoder_hidden));
    forward("--encoder-layers", std::to_string(o.encoder_layers));
    forward("--flow-depth", std::to_string(o.flow_depth));
    forward("--flow-hidden", std::to_string(o.flow_hidden));
    forward("--clip-bound", std::to_string(o.clip_bound));
    args.push_back("--seed");
    args.push_back(std::to_string(seed));
    args.push_back("--out");
    args.push_back((std::filesystem::path(out_root) /
                    ("seed_" + std::to_string(seed)))
                       .string());
    commands.push_back(std::move(args));
  }

  if (jobs <= 0) jobs = static_cast<int>(commands.size());
  std::vector<std::pair<pid_t, std::size_t>> running;
  std::vector<int> results(commands.size(), -1);
  std::size_t next = 0;
  int failures = 0;
  auto reap_one = [&]() {
    int status = 0;
    const pid_t pid = wait(&status);
    if (pid < 0) return;
    for (auto& [rp, idx] : running) {
      if (rp != pid) continue;
      const int code =
          WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      results[idx] = code;
      if (code != 0) ++failures;
      std::cout << "seed " << seeds[idx] << ": "
                << (code == 0 ? "ok" : "failed (exit " + std::to_string(code) + ")")
                << "\n";
      rp = -1;
    }
    running.erase(std::remove_if(running.begin(), running.end(),
                                 [](const auto& r) { return r.first == -1; }),
                  running.end());
  };
  while (next < commands.size() || !running.empty()) {
    while (next < commands.size() &&
           running.size() < static_cast<std::size_t>(jobs)) {
      std::vector<char*> argv;
      for (std::string& s : commands[next]) argv.push_back(s.data());
      argv.push_back(nullptr);
      const pid_t pid = fork();
      if (pid == 0) {
        execv(argv[0], argv.data());
        _exit(127);
      }
      if (pid < 0) {
        std::cerr << "sweep: fork failed\n";
        return 1;
      }
      running.emplace_back(pid, next);
      ++next;
    }
    if (!running.empty()) reap_one();
  }
  std::cout << "sweep: " << commands.size() - failures << "/"
            << commands.size() << " runs succeeded under " << out_root << "\n";
  return failures == 0 ? 0 : 1;
}

int run_aggregate(const std::vector<std::string>& inputs,
                  const std::string& out_path) {
  std::vector<std::vector<CurvePoint>> logs;
  for (const std::string& path : inputs)
    logs.push_back(curve_from_csv(read_text_file(path)));
  const std::vector<CurvePoint> merged = aggregate_runs(logs);
  atomic_write_file(out_path, curve_to_csv(merged));
  std::cout << "aggregated " << logs.size() << " logs, " << merged.size()
            << " points -> " << out_path << "\n";
  return 0;
}

int run_heatmap(const std::string& input, std::string pgm_out,
                const std::string& csv_out) {
  const VisitationGrid grid = visitation_from_csv(read_text_file(input));
  if (pgm_out.empty())
    pgm_out = std::filesystem::path(input).replace_extension(".pgm").string();
  atomic_write_file(pgm_out, visitation_to_pgm(grid));
  std::cout << "image: " << pgm_out << " (" << grid.total() << " counts)\n";
  if (!csv_out.empty()) {
    atomic_write_file(csv_out, visitation_to_csv(grid));
    std::cout << "matrix: " << csv_out << "\n";
  }
  return 0;
}

int run_verify(std::uint64_t seed, const std::string& scratch) {
  struct Suite {
    const char* tag;
    std::vector<CheckResult> results;
  };
  std::vector<Suite> suites;
  suites.push_back({"gradients", gradient_fidelity_suite(seed)});
  suites.push_back({"flows", flow_correctness_suite(seed)});
  suites.push_back({"identity", identity_at_init_suite(seed)});
  suites.push_back({"environment", environment_suite(seed)});
  suites.push_back({"harness", harness_suite(seed, scratch)});
  int failures = 0;
  int total = 0;
  for (const Suite& s : suites) {
    failures += print_check_lines(std::cout, s.tag, s.results);
    total += static_cast<int>(s.results.size());
  }
  std::cout << "verify: " << total - failures << "/" << total
            << " checks passed\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Batch-sized activations sit near the default mmap threshold; keep them on
  // the heap so the tape's alloc/free cycle reuses buffers instead of paging.
  mallopt(M_MMAP_THRESHOLD, 1 << 25);
#endif
  CLI::App app{"Maximum-entropy actor-critic on continuous 2-D gridworlds"};
  app.require_subcommand(1);

  TrainOptions train_opts;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Run one seeded training experiment");
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option("--seed", train_opts.seed, "Run seed");
  train_cmd->add_option("--out", train_opts.out, "Artifact directory");
  train_cmd->add_option("--resume-from,--resume_from", train_opts.resume_from,
                        "Checkpoint file to resume from");

  TrainOptions sweep_opts;
  std::vector<std::uint64_t> sweep_seeds = {0, 1, 2};
  int sweep_jobs = 0;
  std::string sweep_out = "sweep";
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Run several seeds as independent child processes");
  add_train_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--seeds", sweep_seeds,
                        "Seeds to launch (space or comma separated)")
      ->delimiter(',');
  sweep_cmd->add_option("--jobs", sweep_jobs,
                        "Maximum concurrent runs (0 = all at once)");
  sweep_cmd->add_option("--out", sweep_out,
                        "Root directory; each run writes out/seed_<n>");

  std::vector<std::string> agg_inputs;
  std::string agg_out = "aggregate.csv";
  CLI::App* agg_cmd = app.add_subcommand(
      "aggregate", "Merge per-seed curve logs into a mean/std curve");
  agg_cmd->add_option("inputs", agg_inputs, "Curve CSV files")
      ->required()
      ->expected(-1);
  agg_cmd->add_option("--out", agg_out, "Output CSV path");

  std::string hm_input, hm_pgm, hm_csv;
  CLI::App* hm_cmd = app.add_subcommand(
      "heatmap", "Render a visitation matrix as a log-scaled graymap");
  hm_cmd->add_option("input", hm_input, "Visitation CSV file")->required();
  hm_cmd->add_option("--out", hm_pgm, "Output PGM path (default: input.pgm)");
  hm_cmd->add_option("--csv-out", hm_csv, "Optionally re-emit the matrix");

  std::uint64_t verify_seed = 2024;
  std::string verify_scratch =
      (std::filesystem::temp_directory_path() / "softrl_verify").string();
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Run the full property suite");
  verify_cmd->add_option("--seed", verify_seed, "Seed for randomized checks");
  verify_cmd->add_option("--scratch", verify_scratch,
                         "Scratch directory for harness checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      if (!train_opts.config_file.empty())
        apply_config_file(train_cmd, train_opts.config_file);
      return run_train(train_opts);
    }
    if (*sweep_cmd)
      return run_sweep(self_executable(argv[0]), sweep_cmd, sweep_opts,
                       sweep_seeds, sweep_jobs, sweep_out,
                       sweep_opts.config_file);
    if (*agg_cmd) return run_aggregate(agg_inputs, agg_out);
    if (*hm_cmd) return run_heatmap(hm_input, hm_pgm, hm_csv);
    if (*verify_cmd) return run_verify(verify_seed, verify_scratch);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
