#pragma once

// Trust Region Policy Optimization: surrogate advantage objective, conjugate
// gradient against the damped KL Hessian, backtracking line search, and
// value-function regression.

#include "polgrad/cg.hpp"
#include "polgrad/config.hpp"
#include "polgrad/net.hpp"
#include "polgrad/rollout.hpp"

namespace polgrad {

struct TrpoReport {
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double kl = 0.0;
  double cg_residual = 0.0;           // relative |Ax - g| / |g|
  int cg_iterations = 0;
  int backtracks = 0;
  bool accepted = false;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
};

// Sampled surrogate L(theta) = mean_t exp(logpi_theta - logpi_old) * A_t,
// evaluated without a tape (used by the line search).
double surrogate_value(const PolicyValueNet& net, const TrajectoryBatch& batch);

// Sample-average KL(old || theta) without a tape.
double mean_kl_value(const PolicyValueNet& net, const TrajectoryBatch& batch);

// Taped surrogate built on an existing binding.
Tensor surrogate_graph(PolicyValueNet::Bound& bound, const TrajectoryBatch& batch);

// Gradient of the surrogate at the current parameters, flattened over the
// policy side.
Vec policy_gradient_estimate(const PolicyValueNet& net, const TrajectoryBatch& batch);

// Damped Fisher-vector product v -> (H_kl + damping I) v at the current
// parameters, with the old distributions taken from the batch.
MatVec make_kl_hvp(const PolicyValueNet& net, const TrajectoryBatch& batch,
                   double damping);

struct LineSearchResult {
  Vec theta;
  bool accepted = false;
  int backtracks = 0;
  double surrogate = 0.0;
  double kl = 0.0;
};

// Shrinks full_step by alpha^j, j = 0..max_backtracks, and accepts the first
// candidate that improves the sampled surrogate and satisfies the sampled KL
// constraint. Returns theta0 unchanged when every candidate fails.
LineSearchResult backtracking_line_search(
    const Vec& theta0, const Vec& full_step, double surrogate0, double delta,
    double alpha, int max_backtracks,
    const std::function<double(const Vec&)>& surrogate_fn,
    const std::function<double(const Vec&)>& kl_fn);

// Regression of V against the sampled returns; returns (mse before, after).
std::pair<double, double> fit_value_function(PolicyValueNet& net,
                                             const TrajectoryBatch& batch, int epochs,
                                             double lr);

class TrpoTrainer {
 public:
  explicit TrpoTrainer(const TrainConfig& cfg) : cfg_(cfg) {}
  TrpoReport update(PolicyValueNet& net, const TrajectoryBatch& batch);

 private:
  TrainConfig cfg_;
};

}  // namespace polgrad
