#pragma once

// Environment interface shared by in-process environments and the envlink
// remote client. Observation layout for all reacher variants:
//   [ joint positions (M), end-effector position (3), quaternion (w,x,y,z) ]
// so obs_dim == act_dim + 7.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>

#include "polgrad/common.hpp"

namespace polgrad {

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

enum class RewardVariant : std::uint8_t {
  kReach = 0,
  kReachOrient = 1,
  kReachCollision = 2,
  kReachCollisionOrient = 3,
};

struct EnvSpecInfo {
  std::string name;
  int obs_dim = 0;
  int act_dim = 0;
  int max_episode_steps = 0;
  RewardVariant variant = RewardVariant::kReach;
  Pose target;
};

struct Transition {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpecInfo& spec() const = 0;
  virtual void seed(std::uint64_t s) = 0;
  virtual Eigen::VectorXd reset() = 0;
  virtual Transition step(const Eigen::VectorXd& action) = 0;

  // Euclidean distance from the end effector to the target; NaN when the
  // environment has no notion of one (e.g. a remote proxy).
  virtual double distance_to_target() const {
    return std::numeric_limits<double>::quiet_NaN();
  }

  // State snapshot for exact training resume; returns false when unsupported.
  virtual bool save_state(std::ostream&) const { return false; }
  virtual bool load_state(std::istream&) { return false; }
};

using EnvFactory = std::function<std::unique_ptr<Env>()>;

}  // namespace polgrad
