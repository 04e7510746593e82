#include "polgrad/reacher.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace polgrad {

double reward_for(RewardVariant variant, const Pose& pose, const Pose& target,
                  bool collided) {
  double r = -(pose.position - target.position).norm();
  if (variant == RewardVariant::kReachOrient ||
      variant == RewardVariant::kReachCollisionOrient) {
    // |dot| handles the quaternion double cover: q and -q are the same pose.
    const double qdot = std::abs(pose.orientation.coeffs().dot(
        target.orientation.coeffs()));
    r -= kOrientationCoef * (1.0 - std::min(qdot, 1.0));
  }
  if (collided) r -= kCollisionPenalty;
  return r;
}

ReacherEnv::ReacherEnv(const std::string& name, ArmModel model, RewardVariant variant,
                       Pose target, const ReacherOptions& opts)
    : model_(std::move(model)) {
  if (opts.model_override) model_ = *opts.model_override;
  model_.validate();
  if (opts.target_override) target = *opts.target_override;
  spec_.name = name;
  spec_.act_dim = model_.dof();
  spec_.obs_dim = model_.dof() + 7;
  spec_.max_episode_steps = opts.max_episode_steps;
  spec_.variant = variant;
  spec_.target = target;
  randomize_target_ = opts.randomize_target;
  joints_ = Eigen::VectorXd::Zero(model_.dof());
}

Eigen::VectorXd ReacherEnv::observe(const Pose& pose) const {
  Eigen::VectorXd obs(spec_.obs_dim);
  obs.head(model_.dof()) = joints_;
  obs.segment(model_.dof(), 3) = pose.position;
  obs[model_.dof() + 3] = pose.orientation.w();
  obs[model_.dof() + 4] = pose.orientation.x();
  obs[model_.dof() + 5] = pose.orientation.y();
  obs[model_.dof() + 6] = pose.orientation.z();
  return obs;
}

void ReacherEnv::sample_target() {
  // Rejection-sample a reachable, collision-free joint pose and target there.
  for (int attempt = 0; attempt < 256; ++attempt) {
    Eigen::VectorXd q(model_.dof());
    for (int i = 0; i < model_.dof(); ++i)
      q[i] = rng_.uniform(model_.joints[static_cast<std::size_t>(i)].limit_lo * 0.5,
                          model_.joints[static_cast<std::size_t>(i)].limit_hi * 0.5);
    if (collision_check(model_, q)) continue;
    spec_.target = forward_kinematics(model_, q);
    return;
  }
  throw EnvFault(spec_.name + ": could not sample a collision-free target");
}

Eigen::VectorXd ReacherEnv::reset() {
  joints_.setZero();
  step_count_ = 0;
  if (randomize_target_) sample_target();
  return observe(forward_kinematics(model_, joints_));
}

Transition ReacherEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != model_.dof())
    throw EnvFault(spec_.name + ": action width " + std::to_string(action.size()) +
                   " != " + std::to_string(model_.dof()));
  if (!action.allFinite())
    throw EnvFault(spec_.name + ": non-finite action at step " +
                   std::to_string(step_count_));
  const double a_max = model_.max_joint_delta;
  for (int i = 0; i < model_.dof(); ++i) {
    const ArmJoint& j = model_.joints[static_cast<std::size_t>(i)];
    const double delta = std::clamp(action[i], -a_max, a_max);
    joints_[i] = std::clamp(joints_[i] + delta, j.limit_lo, j.limit_hi);
  }
  step_count_ += 1;

  const Pose pose = forward_kinematics(model_, joints_);
  const bool collision_variant = spec_.variant == RewardVariant::kReachCollision ||
                                 spec_.variant == RewardVariant::kReachCollisionOrient;
  const bool collided = collision_variant && collision_check(model_, joints_);

  Transition t;
  t.observation = observe(pose);
  t.reward = reward_for(spec_.variant, pose, spec_.target, collided);
  t.done = collided || step_count_ >= spec_.max_episode_steps;
  return t;
}

double ReacherEnv::distance_to_target() const {
  return (forward_kinematics(model_, joints_).position - spec_.target.position).norm();
}

bool ReacherEnv::save_state(std::ostream& os) const {
  os << "reacher_state " << joints_.size();
  for (Eigen::Index i = 0; i < joints_.size(); ++i) os << " " << fmt_hex(joints_[i]);
  os << " " << step_count_ << " ";
  rng_.save(os);
  os << "\n";
  os << "target " << fmt_hex(spec_.target.position.x()) << " "
     << fmt_hex(spec_.target.position.y()) << " " << fmt_hex(spec_.target.position.z())
     << " " << fmt_hex(spec_.target.orientation.w()) << " "
     << fmt_hex(spec_.target.orientation.x()) << " "
     << fmt_hex(spec_.target.orientation.y()) << " "
     << fmt_hex(spec_.target.orientation.z()) << "\n";
  return true;
}

bool ReacherEnv::load_state(std::istream& is) {
  std::string tok;
  Eigen::Index n = 0;
  is >> tok >> n;
  if (tok != "reacher_state" || n != joints_.size())
    throw ContractError("ReacherEnv::load_state: bad header");
  for (Eigen::Index i = 0; i < n; ++i) {
    is >> tok;
    joints_[i] = parse_double(tok);
  }
  is >> step_count_;
  rng_.load(is);
  is >> tok;
  if (tok != "target") throw ContractError("ReacherEnv::load_state: bad target");
  double v[7];
  for (double& x : v) {
    is >> tok;
    x = parse_double(tok);
  }
  spec_.target.position = Eigen::Vector3d(v[0], v[1], v[2]);
  spec_.target.orientation = Eigen::Quaterniond(v[3], v[4], v[5], v[6]);
  return true;
}

std::vector<std::string> env_names() {
  return {"Reach2D-v0", "Reach6D-v0", "ReachOrient6D-v0", "ReachCollision6D-v0",
          "ReachCollisionOrient6D-v0"};
}

std::unique_ptr<Env> make_env(const std::string& name, const ReacherOptions& opts) {
  Pose target6;
  target6.position = Eigen::Vector3d(-0.40028, 0.095615, 0.72466);
  target6.orientation = Eigen::Quaterniond(0.0, 0.7071068, 0.7071068, 0.0);

  if (name == "Reach2D-v0") {
    Pose target;
    target.position = Eigen::Vector3d(1.2, 0.8, 0.0);
    return std::make_unique<ReacherEnv>(name, planar_2dof_model(),
                                        RewardVariant::kReach, target, opts);
  }
  if (name == "Reach6D-v0")
    return std::make_unique<ReacherEnv>(name, arm_6dof_model(), RewardVariant::kReach,
                                        target6, opts);
  if (name == "ReachOrient6D-v0")
    return std::make_unique<ReacherEnv>(name, arm_6dof_model(),
                                        RewardVariant::kReachOrient, target6, opts);
  if (name == "ReachCollision6D-v0")
    return std::make_unique<ReacherEnv>(name, arm_6dof_model(),
                                        RewardVariant::kReachCollision, target6, opts);
  if (name == "ReachCollisionOrient6D-v0")
    return std::make_unique<ReacherEnv>(name, arm_6dof_model(),
                                        RewardVariant::kReachCollisionOrient, target6,
                                        opts);
  throw ConfigError("unknown environment '" + name + "'");
}

}  // namespace polgrad
