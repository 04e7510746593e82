#pragma once

// Actor-critic with Kronecker-factored natural gradient. Per linear layer the
// Fisher block is approximated as G (x) A, with A the covariance of
// bias-augmented layer inputs and G the covariance of per-sample gradients at
// the layer's pre-activation outputs. Actor factors use actions sampled from
// the model's own distribution (true Fisher; a toggle switches to batch
// actions). Critic curvature is the Gauss-Newton matrix, i.e. the Fisher of a
// Gaussian observation model with sigma = 1.
//
// Layer gradients are stored stacked, weights over bias: shape (in+1, out).
// The preconditioned step is (A + l_A I)^-1 grad (G + l_G I)^-1 with
// l_A * l_G = damping split by the trace-balancing rule. The state-independent
// log_std parameters sit outside the layer factorization and use their exact
// diagonal Fisher block (2 per dimension).

#include <iosfwd>
#include <map>

#include "polgrad/config.hpp"
#include "polgrad/net.hpp"
#include "polgrad/rollout.hpp"

namespace polgrad {

struct KfacLayerState {
  Mat A;  // (in+1, in+1) running E[a a^T], bias-augmented inputs
  Mat G;  // (out, out) running E[g g^T]
  Mat A_inv, G_inv;  // damped inverse caches
  double lambda_a = 0.0, lambda_g = 0.0;  // damping split at the last refresh
  bool inv_valid = false;
  int staleness = 0;
  double cond_a = 0.0, cond_g = 0.0;
  long long updates = 0;

  void init(int in_plus_bias, int out);
  // A <- decay A + (1-decay) mean(a a^T); same for G. Rows are per-sample.
  void accumulate(const Mat& a_rows, const Mat& g_rows, double decay);
  // Rebuilds the damped inverses; throws when a damped factor is not SPD.
  void refresh(double damping);

  void save(std::ostream& os) const;
  void load(std::istream& is);
};

// Splits total damping into (lambda_a, lambda_g) with lambda_a * lambda_g =
// damping, balanced by the factor traces.
std::pair<double, double> factored_damping_split(const Mat& A, const Mat& G,
                                                 double damping);

// (A + l_A I)^-1 grad (G + l_G I)^-1 using the cached inverses.
Mat kfac_step(const KfacLayerState& state, const Mat& grad);

// delta' (G_d (x) A_d) delta for a layer update, damped factors.
double kfac_quadratic_form(const KfacLayerState& state, const Mat& delta);

// Algorithm-3-style backward recursion: R starts at 0 for a terminal tail and
// at v_end otherwise, then R <- r_i + gamma R, restarting inside at terminals.
Vec nstep_returns(const Vec& rewards, const std::vector<std::uint8_t>& terminals,
                  double v_end, double gamma, int t_max);

// eta = min(eta_max, sqrt(2 delta / quad)); 0 when quad is 0.
double trust_region_eta(double quad, double delta, double eta_max);

struct AcktrReport {
  double actor_objective = 0.0;
  double eta_actor = 0.0;
  double eta_critic = 0.0;
  double value_loss_before = 0.0;
  double value_loss_after = 0.0;
  double max_factor_cond = 0.0;
  double kl = 0.0;  // realized policy shift, diagnostics only
};

class AcktrTrainer {
 public:
  AcktrTrainer(const TrainConfig& cfg, const PolicyValueNet& net);
  AcktrReport update(PolicyValueNet& net, const TrajectoryBatch& batch, Rng& rng);

  const KfacLayerState& layer_state(const std::string& name) const;
  int max_staleness() const;

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  void ensure_states(const std::vector<LayerTap>& taps);
  void refresh_if_due();

  TrainConfig cfg_;
  std::map<std::string, KfacLayerState> states_;
  long long update_index_ = 0;
};

}  // namespace polgrad
