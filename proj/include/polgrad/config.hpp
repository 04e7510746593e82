#pragma once

// Run configuration: every hyperparameter with its default, parsed from flat
// `key=value` text with CLI overrides layered on top. The resolved config is
// snapshotted into each run directory.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polgrad/common.hpp"

namespace polgrad {

struct TrainConfig {
  // run
  std::string algo = "ppo";  // trpo | ppo | acktr
  std::string env = "Reach2D-v0";
  std::uint64_t seed = 1;
  long long total_steps = 150000;
  int horizon = 2048;          // transitions per update, split across workers
  int workers = 1;
  std::string out_dir;         // defaults to runs/<algo>_<env>_seed<seed>
  std::string remote;          // host:port of an envlink server, empty = local
  std::string arm_config;      // optional arm geometry file
  int checkpoint_every = 10;   // updates between checkpoints
  int max_episode_steps = 512;
  bool randomize_target = false;

  // estimation
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int normalize_adv = -1;  // -1 auto (on for trpo/ppo, off for acktr)

  // network
  std::vector<int> hidden = {64, 64};
  double log_std_init = 0.0;
  bool shared_trunk = false;

  // trpo
  double trpo_delta = 0.01;
  double cg_damping = 0.1;
  double cg_tol = 1e-10;
  int cg_iters = 10;
  double backtrack_coef = 0.8;
  int max_backtracks = 10;
  int vf_epochs = 25;
  double vf_lr = 1e-2;

  // ppo
  double clip_eps = 0.2;
  int ppo_epochs = 10;
  int minibatch = 256;
  double ppo_lr = 3e-4;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  std::string optimizer = "adam";  // adam | sgd
  bool kl_early_stop = false;      // optional extension, off by default
  double target_kl = 0.015;

  // acktr
  double kfac_delta = 0.002;
  double kfac_eta_max = 0.25;
  double kfac_damping = 0.01;
  double kfac_decay = 0.99;
  int kfac_invert_every = 10;
  bool kfac_empirical_fisher = false;  // true: batch actions, false: model-sampled
  std::string kfac_critic_mode = "gauss-newton";  // gauss-newton | sampled

  bool normalize_advantages_resolved() const {
    if (normalize_adv >= 0) return normalize_adv != 0;
    return algo != "acktr";
  }

  // 2048-step episodes and 1M total steps as used in the benchmark protocol.
  void apply_paper_preset();
  void validate() const;  // throws ConfigError

  void set(const std::string& key, const std::string& value);
  static TrainConfig from_file(const std::string& path);
  void load_stream(std::istream& is);
  void write(std::ostream& os) const;
};

}  // namespace polgrad
