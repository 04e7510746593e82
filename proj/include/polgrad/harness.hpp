#pragma once

// Training orchestration: the collect -> estimate -> update loop, run
// directory layout (config snapshot, CSV logs, checkpoints), deterministic
// seeding, resume, and evaluation.
//
// Run directory contents:
//   config.txt    resolved configuration (every default spelled out)
//   progress.csv  one row per update (deterministic)
//   episodes.csv  one row per completed episode (deterministic)
//   timing.csv    wall-clock per update (kept apart so the deterministic
//                 logs stay byte-comparable across runs)
//   checkpoint_<update>.txt, checkpoint_final.txt

#include <deque>
#include <fstream>

#include "polgrad/acktr.hpp"
#include "polgrad/config.hpp"
#include "polgrad/curves.hpp"
#include "polgrad/ppo.hpp"
#include "polgrad/rollout.hpp"
#include "polgrad/trpo.hpp"

namespace polgrad {

// Unified per-update diagnostics across the three algorithms; fields that do
// not apply stay NaN (printed as "nan").
struct UpdateStats {
  double kl = std::numeric_limits<double>::quiet_NaN();
  double clip_frac = std::numeric_limits<double>::quiet_NaN();
  double cg_residual = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  double value_loss = std::numeric_limits<double>::quiet_NaN();
  double surrogate_improve = std::numeric_limits<double>::quiet_NaN();
  int backtracks = -1;
};

class AlgoTrainer {
 public:
  static std::unique_ptr<AlgoTrainer> make(const TrainConfig& cfg,
                                           PolicyValueNet& net);
  virtual ~AlgoTrainer() = default;
  virtual UpdateStats update(PolicyValueNet& net, TrajectoryBatch& batch,
                             Rng& rng) = 0;
  virtual void save_state(std::ostream&) const {}
  virtual void load_state(std::istream&) {}
};

class RunLogger {
 public:
  RunLogger(const std::string& dir, bool append);

  void log_episodes(const std::vector<CompletedEpisode>& episodes);
  void log_update(long long update, long long total_steps, const UpdateStats& stats);
  void log_timing(long long update, double seconds);

  double rolling_mean() const;
  double rolling_std() const;
  long long episodes_logged() const { return episode_counter_; }
  int episodes_since_update() const { return episodes_since_update_; }
  double mean_reward_since_update() const;

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  std::ofstream progress_, episodes_, timing_;
  std::deque<double> window_;
  long long episode_counter_ = 0;
  int episodes_since_update_ = 0;
  double reward_since_update_ = 0.0;
};

struct EvalSummary {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_final_distance = 0.0;
  int episodes = 0;
};

// Runs full episodes; deterministic mode uses the mean action. Does not
// mutate parameters.
EvalSummary evaluate(const PolicyValueNet& net, Env& env, int episodes,
                     bool deterministic, Rng& rng);

struct TrainResult {
  std::string run_dir;
  long long total_steps = 0;
  long long updates = 0;
  std::string final_checkpoint;
};

// Callback fired after every update; return false to stop early (used by the
// acceptance suite's learning checks). May be null.
using UpdateHook = std::function<bool(long long update, long long total_steps,
                                      const PolicyValueNet& net)>;

TrainResult train(TrainConfig cfg, const UpdateHook& hook = nullptr);
TrainResult resume_training(const std::string& checkpoint_path,
                            const std::string& out_dir,
                            long long total_steps_override = -1,
                            const UpdateHook& hook = nullptr);

// Environment construction per config (local by name or remote endpoint).
EnvFactory make_env_factory(const TrainConfig& cfg);

// Loads only the net (and config echo) from a checkpoint, for evaluation.
struct CheckpointHead {
  TrainConfig config;
  PolicyValueNet net;
};
CheckpointHead load_checkpoint_head(const std::string& path);

}  // namespace polgrad
