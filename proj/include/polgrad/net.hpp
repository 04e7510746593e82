#pragma once

// Actor-critic parameter container. Two wirings:
//   disjoint      — independent policy and value MLPs (default)
//   shared trunk  — one hidden trunk with distinct linear policy/value heads
// log_std is a free (1,M) parameter, state-independent, clamped on use.
//
// Flat parameter order (fixed, relied upon by checkpointing and the
// trust-region solvers): [trunk layers]* , policy layers, log_std, value
// layers — each layer as W (row-major) then b. In shared mode the trunk
// appears exactly once.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "polgrad/distributions.hpp"
#include "polgrad/mlp.hpp"

namespace polgrad {

enum class Sharing { kDisjoint, kSharedTrunk };

struct NetSpec {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<int> hidden = {64, 64};
  Sharing sharing = Sharing::kDisjoint;
  double log_std_init = 0.0;
};

// Where a bound layer sits in the network; used by K-FAC to key factor state.
struct LayerTap {
  Tensor input;    // (T, in) activations feeding the layer
  Tensor preact;   // (T, out) pre-activation outputs
  Tensor W;
  Tensor b;
  std::string name;
};

class PolicyValueNet {
 public:
  static PolicyValueNet create(const NetSpec& spec, Rng& rng);

  const NetSpec& spec() const { return spec_; }
  int obs_dim() const { return spec_.obs_dim; }
  int act_dim() const { return spec_.act_dim; }

  // --- plain fast paths (no tape) ---
  DiagonalGaussian policy(const RowVec& obs) const;
  Mat policy_mean_batch(const Mat& obs) const;  // (T,M)
  RowVec clamped_log_std() const;
  double value(const RowVec& obs) const;
  Vec value_batch(const Mat& obs) const;

  // --- parameter access, flatten order ---
  std::vector<Mat*> param_mats();
  std::vector<const Mat*> param_mats() const;
  std::vector<std::string> param_names() const;
  std::vector<Mat*> policy_param_mats();  // trunk (if shared) + policy + log_std
  std::vector<const Mat*> policy_param_mats() const;
  std::vector<Mat*> value_param_mats();   // trunk (if shared) + value
  std::vector<const Mat*> value_param_mats() const;

  Vec flatten_policy() const { return flatten_params(policy_param_mats()); }
  void set_policy_from_flat(const Vec& flat);

  Mat& log_std() { return log_std_; }
  const Mat& log_std() const { return log_std_; }

  // --- taped graphs ---
  // Binds all parameters once on the tape; graphs built afterwards share the
  // leaves, so gradients aggregate correctly even across policy/value calls.
  class Bound {
   public:
    Tensor policy_mean(const Mat& obs, std::vector<LayerTap>* taps = nullptr);
    Tensor value_out(const Mat& obs, std::vector<LayerTap>* taps = nullptr);
    // Both heads over a single trunk evaluation (the trunk taps appear once,
    // as the joint-distribution Fisher requires).
    struct JointGraph {
      Tensor mean;
      Tensor value;
      std::vector<LayerTap> trunk_taps, policy_taps, value_taps;
    };
    JointGraph joint_forward(const Mat& obs);
    Tensor log_std() const { return log_std_clipped_; }
    // Leaves aligned with the net's policy_param_mats()/value_param_mats();
    // log_std leaf is the raw (unclipped) parameter.
    const std::vector<Tensor>& policy_leaves() const { return policy_leaves_; }
    const std::vector<Tensor>& value_leaves() const { return value_leaves_; }
    // Aligned with param_mats(): trunk, policy, log_std, value.
    std::vector<Tensor> all_leaves() const;

   private:
    friend class PolicyValueNet;
    Tape* tape_ = nullptr;
    const PolicyValueNet* net_ = nullptr;
    std::vector<Tensor> trunk_leaves_, policy_mlp_leaves_, value_mlp_leaves_;
    std::vector<Tensor> policy_leaves_, value_leaves_;
    Tensor log_std_raw_, log_std_clipped_;
    Tensor trunk_forward(const Mat& obs, std::vector<LayerTap>* taps);
  };
  Bound bind(Tape& tape) const;

  // --- checkpoint section ---
  void save(std::ostream& os) const;
  static PolicyValueNet load(std::istream& is);

 private:
  void check_obs(Eigen::Index width, const char* where) const;
  Mat trunk_apply(const Mat& obs) const;

  NetSpec spec_;
  MlpParams trunk_;   // shared mode only
  MlpParams policy_;  // disjoint: obs->...->M; shared: last_hidden->M
  MlpParams value_;   // disjoint: obs->...->1; shared: last_hidden->1
  Mat log_std_;       // (1, M)
};

}  // namespace polgrad
