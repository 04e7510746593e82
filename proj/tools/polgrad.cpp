// polgrad: train / evaluate / plot / serve for the reacher policy-gradient
// toolkit. Exit codes: 0 ok, 2 config error, 3 environment fault.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "polgrad/envlink.hpp"
#include "polgrad/harness.hpp"
#include "polgrad/reacher.hpp"

using namespace polgrad;

namespace {

struct TrainArgs {
  TrainConfig cfg;
  std::string config_file;
  std::string resume_ckpt;
  bool paper = false;
  bool bench_shared = false;
};

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

int cmd_train(TrainArgs& args, const TrainConfig& flag_values,
              const std::vector<std::string>& set_flags) {
  if (!args.resume_ckpt.empty()) {
    TrainResult res = resume_training(args.resume_ckpt, flag_values.out_dir,
                                      flag_values.total_steps);
    std::printf("resumed run: %s (%lld updates, %lld env steps)\n",
                res.run_dir.c_str(), res.updates, res.total_steps);
    return 0;
  }
  TrainConfig cfg;
  if (!args.config_file.empty()) cfg = TrainConfig::from_file(args.config_file);
  // CLI flags override the file
  if (!flag_values.algo.empty()) cfg.algo = flag_values.algo;
  if (!flag_values.env.empty()) cfg.env = flag_values.env;
  if (flag_values.total_steps >= 0) cfg.total_steps = flag_values.total_steps;
  if (flag_values.seed != UINT64_MAX) cfg.seed = flag_values.seed;
  if (flag_values.workers > 0) cfg.workers = flag_values.workers;
  if (!flag_values.out_dir.empty()) cfg.out_dir = flag_values.out_dir;
  if (!flag_values.remote.empty()) cfg.remote = flag_values.remote;
  if (args.paper) cfg.apply_paper_preset();
  apply_overrides(cfg, set_flags);

  if (args.bench_shared) {
    // identical discount, horizon and network across the three algorithms
    const std::string base =
        cfg.out_dir.empty()
            ? "runs/bench_" + cfg.env + "_seed" + std::to_string(cfg.seed)
            : cfg.out_dir;
    for (const std::string algo : {"trpo", "ppo", "acktr"}) {
      TrainConfig c = cfg;
      c.algo = algo;
      c.normalize_adv = -1;
      c.out_dir = base + "/" + algo;
      TrainResult res = train(c);
      std::printf("%s: %s (%lld env steps)\n", algo.c_str(), res.run_dir.c_str(),
                  res.total_steps);
    }
    return 0;
  }
  TrainResult res = train(cfg);
  std::printf("run: %s (%lld updates, %lld env steps)\n", res.run_dir.c_str(),
              res.updates, res.total_steps);
  std::printf("final checkpoint: %s\n", res.final_checkpoint.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, int episodes, bool stochastic,
             std::uint64_t seed) {
  CheckpointHead head = load_checkpoint_head(ckpt);
  EnvFactory factory = make_env_factory(head.config);
  auto env = factory();
  env->seed(seed);
  Rng rng(seed);
  EvalSummary s = evaluate(head.net, *env, episodes, !stochastic, rng);
  std::printf("episodes:            %d\n", s.episodes);
  std::printf("mean episode reward: %s\n", fmt_g17(s.mean_reward).c_str());
  std::printf("reward std:          %s\n", fmt_g17(s.std_reward).c_str());
  std::printf("mean final distance: %s m\n", fmt_g17(s.mean_final_distance).c_str());
  return 0;
}

int cmd_plot(const std::vector<std::string>& paths) {
  for (const std::string& p : paths) {
    CurveOutputs out = export_curve(p);
    std::printf("%s -> %s, %s\n", p.c_str(), out.svg.c_str(),
                out.rolling_csv.c_str());
  }
  return 0;
}

int cmd_serve(const std::string& env_name, const std::string& bind, int max_steps,
              bool randomize) {
  ReacherOptions opts;
  opts.max_episode_steps = max_steps;
  opts.randomize_target = randomize;
  envlink::Endpoint ep = envlink::parse_endpoint(bind);
  envlink::EnvServer server([env_name, opts] { return make_env(env_name, opts); },
                            ep);
  std::printf("serving %s on %s:%u\n", env_name.c_str(), ep.host.c_str(),
              server.port());
  std::fflush(stdout);
  server.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy-gradient training toolkit for kinematic reachers"};
  app.require_subcommand(1);

  TrainArgs targs;
  TrainConfig flag_values;
  flag_values.algo = "";
  flag_values.env = "";
  flag_values.total_steps = -1;
  flag_values.seed = UINT64_MAX;
  flag_values.workers = 0;
  flag_values.out_dir = "";
  std::vector<std::string> set_flags;
  auto* train_cmd = app.add_subcommand("train", "run a training loop");
  train_cmd->add_option("--algo", flag_values.algo, "trpo|ppo|acktr");
  train_cmd->add_option("--env", flag_values.env, "environment name");
  train_cmd->add_option("--steps", flag_values.total_steps, "total env steps");
  train_cmd->add_option("--seed", flag_values.seed, "rng seed");
  train_cmd->add_option("--workers", flag_values.workers, "rollout workers");
  train_cmd->add_option("--out", flag_values.out_dir, "run directory");
  train_cmd->add_option("--remote", flag_values.remote,
                        "host:port of an envlink server");
  train_cmd->add_option("--config", targs.config_file, "key=value config file");
  train_cmd->add_option("--set", set_flags, "override any config key (key=value)");
  train_cmd->add_option("--resume", targs.resume_ckpt, "checkpoint to resume from");
  train_cmd->add_flag("--paper", targs.paper, "2048-step episodes, 1M total steps");
  train_cmd->add_flag("--bench-shared", targs.bench_shared,
                      "run all three algorithms with shared hyperparameters");

  std::string eval_ckpt;
  int eval_episodes = 10;
  bool eval_stochastic = false;
  std::uint64_t eval_seed = 1;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "episodes to run");
  eval_cmd->add_option("--seed", eval_seed, "rng seed");
  eval_cmd->add_flag("--stochastic", eval_stochastic,
                     "sample actions instead of using the mean");

  std::vector<std::string> plot_paths;
  auto* plot_cmd = app.add_subcommand("plot", "export reward curves");
  plot_cmd->add_option("csv", plot_paths, "episodes.csv paths")->required();

  std::string serve_env = "Reach2D-v0";
  std::string serve_bind = "127.0.0.1:0";
  int serve_max_steps = 512;
  bool serve_randomize = false;
  auto* serve_cmd = app.add_subcommand("serve", "serve an environment over envlink");
  serve_cmd->add_option("--env", serve_env, "environment name");
  serve_cmd->add_option("--bind", serve_bind, "host:port (port 0 = ephemeral)");
  serve_cmd->add_option("--max-episode-steps", serve_max_steps, "episode cap");
  serve_cmd->add_flag("--randomize-target", serve_randomize,
                      "sample a fresh target per episode");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(targs, flag_values, set_flags);
    if (eval_cmd->parsed())
      return cmd_eval(eval_ckpt, eval_episodes, eval_stochastic, eval_seed);
    if (plot_cmd->parsed()) return cmd_plot(plot_paths);
    if (serve_cmd->parsed())
      return cmd_serve(serve_env, serve_bind, serve_max_steps, serve_randomize);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const EnvFault& e) {
    std::fprintf(stderr, "environment fault: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
