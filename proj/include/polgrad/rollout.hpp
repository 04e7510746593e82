#pragma once

// On-policy trajectory collection and advantage estimation, shared by all
// three algorithms. A batch may hold several worker segments laid out
// back to back; returns/advantages never cross a segment or episode boundary.

#include <functional>

#include "polgrad/env.hpp"
#include "polgrad/net.hpp"

namespace polgrad {

struct CompletedEpisode {
  double total_reward = 0.0;
  int length = 0;
  long long end_step = 0;  // cumulative env steps at completion
};

struct TrajectoryBatch {
  Mat states;       // (T, N)
  Mat actions;      // (T, M)
  Vec rewards;      // (T)
  std::vector<std::uint8_t> terminals;
  Vec log_probs;    // (T) under the collecting policy
  Mat old_mean;     // (T, M) collecting-policy distribution params
  Mat old_log_std;  // (T, M)
  Vec values;       // (T) V(s_t) under the collecting critic
  Vec returns;      // (T) populated by compute_returns_and_advantages
  Vec advantages;   // (T) idem
  std::vector<int> segment_ends;        // exclusive row index per segment
  std::vector<double> bootstrap_values; // V(s_end) per segment (0 if terminal)
  std::vector<CompletedEpisode> episodes;

  int T() const { return static_cast<int>(rewards.size()); }
  int segments() const { return static_cast<int>(segment_ends.size()); }
};

// Discounted rewards-to-go over one segment; the running sum restarts after
// every terminal row and the tail is bootstrapped with `bootstrap` when the
// segment was cut mid-episode.
Vec rewards_to_go(const Vec& rewards, const std::vector<std::uint8_t>& terminals,
                  double bootstrap, double gamma);

// GAE(lambda) over one segment.
Vec gae_advantages(const Vec& rewards, const Vec& values,
                   const std::vector<std::uint8_t>& terminals, double bootstrap,
                   double gamma, double lambda);

// Zero-mean unit-std (population); all-zero output if std < 1e-8.
void normalize_advantages(Vec& adv);

void compute_returns_and_advantages(TrajectoryBatch& batch, double gamma,
                                    double lambda);

// Per-worker collection state that survives across updates (and checkpoints):
// the env mid-episode, the action-sampling stream, and the running episode
// accumulators feeding the reward log.
struct RolloutWorker {
  std::unique_ptr<Env> env;
  Rng rng{0};
  Eigen::VectorXd last_obs;
  bool needs_reset = true;
  double episode_return = 0.0;
  int episode_len = 0;
};

// Collects exactly `steps` transitions from one worker into rows
// [row_offset, row_offset + steps) of `out`. Completed episodes and the tail
// bootstrap value are reported separately so parallel workers never touch
// shared containers.
void collect_segment(RolloutWorker& worker, const PolicyValueNet& net, int steps,
                     TrajectoryBatch& out, int row_offset, long long steps_before,
                     std::vector<CompletedEpisode>& episodes_out,
                     double& bootstrap_out);

class RolloutPool {
 public:
  RolloutPool(const EnvFactory& factory, int workers, std::uint64_t seed);

  // Gathers total_steps transitions split evenly across workers; merge order
  // is fixed by worker index, so results are deterministic for a fixed
  // (seed, workers). Workers run on separate threads.
  TrajectoryBatch collect(const PolicyValueNet& net, int total_steps);

  int workers() const { return static_cast<int>(workers_.size()); }
  long long total_env_steps() const { return total_env_steps_; }

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  std::vector<RolloutWorker> workers_;
  long long total_env_steps_ = 0;
};

}  // namespace polgrad
