#pragma once

// Proximal Policy Optimization with the clipped surrogate objective and
// multiple epochs of shuffled minibatch updates per collected batch.

#include <iosfwd>

#include "polgrad/config.hpp"
#include "polgrad/net.hpp"
#include "polgrad/optim.hpp"
#include "polgrad/rollout.hpp"

namespace polgrad {

struct PpoReport {
  double clip_loss = 0.0;      // L^clip on the full batch after the update
  double ratio_mean = 1.0;
  double ratio_max = 1.0;
  double clip_fraction = 0.0;  // share of |r - 1| > eps after the update
  double kl = 0.0;             // closed-form mean KL(old || new)
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
  int epochs_run = 0;
};

// Per-step probability ratios r_t = pi_theta(a|s) / pi_old(a|s), no tape.
Vec probability_ratio(const PolicyValueNet& net, const TrajectoryBatch& batch);

// Plain L^clip value; eps <= 0 is a config error.
double clipped_loss(const Vec& ratio, const Vec& advantages, double eps);

// Taped L^clip from a ratio graph.
Tensor clipped_loss_graph(const Tensor& ratio, const Vec& advantages, double eps);

double clip_fraction_of(const Vec& ratio, double eps);

class PpoTrainer {
 public:
  PpoTrainer(const TrainConfig& cfg, PolicyValueNet& net);
  PpoReport update(PolicyValueNet& net, const TrajectoryBatch& batch, Rng& rng);

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  TrainConfig cfg_;
  Adam opt_;
};

}  // namespace polgrad
