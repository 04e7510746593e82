#pragma once

// Kinematic reacher environments over ArmModel. Actions are bounded
// joint-position deltas: joints <- clamp(joints + clamp(a, +-a_max), limits).
// Rewards are <= 0 everywhere and 0 exactly at the target with no collision:
//   Reach                -|p - p*|
//   ReachOrient          -|p - p*| - c_o * (1 - |<q, q*>|)
//   ReachCollision       Reach - c_c on collision, episode terminates
//   ReachCollisionOrient both
// Episodes end at max_episode_steps; reset puts every joint at zero.

#include <optional>

#include "polgrad/arm.hpp"
#include "polgrad/env.hpp"

namespace polgrad {

inline constexpr double kOrientationCoef = 0.1;   // c_o
inline constexpr double kCollisionPenalty = 1.0;  // c_c

double reward_for(RewardVariant variant, const Pose& pose, const Pose& target,
                  bool collided);

struct ReacherOptions {
  int max_episode_steps = 512;
  bool randomize_target = false;
  std::optional<Pose> target_override;
  std::optional<ArmModel> model_override;
};

class ReacherEnv final : public Env {
 public:
  ReacherEnv(const std::string& name, ArmModel model, RewardVariant variant,
             Pose target, const ReacherOptions& opts);

  const EnvSpecInfo& spec() const override { return spec_; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }
  Eigen::VectorXd reset() override;
  Transition step(const Eigen::VectorXd& action) override;
  double distance_to_target() const override;

  bool save_state(std::ostream& os) const override;
  bool load_state(std::istream& is) override;

  const ArmModel& model() const { return model_; }
  const Eigen::VectorXd& joints() const { return joints_; }
  Pose current_pose() const { return forward_kinematics(model_, joints_); }

 private:
  Eigen::VectorXd observe(const Pose& pose) const;
  void sample_target();

  EnvSpecInfo spec_;
  ArmModel model_;
  Eigen::VectorXd joints_;
  int step_count_ = 0;
  bool randomize_target_ = false;
  Rng rng_{0};
};

// Registry: Reach2D-v0, Reach6D-v0, ReachOrient6D-v0, ReachCollision6D-v0,
// ReachCollisionOrient6D-v0.
std::vector<std::string> env_names();
std::unique_ptr<Env> make_env(const std::string& name,
                              const ReacherOptions& opts = {});

}  // namespace polgrad
