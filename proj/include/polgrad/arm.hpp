#pragma once

// Serial-chain arm kinematics. Each joint rotates about a fixed axis in its
// parent frame and is followed by a rigid link translation in the rotated
// frame. No dynamics: pose is a pure function of the joint vector.

#include <iosfwd>
#include <vector>

#include "polgrad/env.hpp"

namespace polgrad {

struct ArmJoint {
  Eigen::Vector3d axis;  // unit rotation axis, parent frame
  Eigen::Vector3d link;  // child-frame translation to the next joint
  double limit_lo = -3.14159265358979323846;
  double limit_hi = 3.14159265358979323846;
};

struct ArmModel {
  std::vector<ArmJoint> joints;
  Eigen::Vector3d base_position = Eigen::Vector3d::Zero();
  bool has_table = false;
  double table_z = 0.0;                // collision plane height
  std::vector<double> link_radius;     // capsule radius per link
  double max_joint_delta = 0.1;        // per-step action bound, radians

  int dof() const { return static_cast<int>(joints.size()); }
  double reach() const;  // sum of link lengths
  void validate() const;
};

// Pose of the final link frame.
Pose forward_kinematics(const ArmModel& model, const Eigen::VectorXd& joints);

// Joint-frame origins along the chain: base, then one point per joint.
std::vector<Eigen::Vector3d> chain_points(const ArmModel& model,
                                          const Eigen::VectorXd& joints);

// True iff any link capsule dips below the table plane or two non-adjacent
// link capsules intersect.
bool collision_check(const ArmModel& model, const Eigen::VectorXd& joints);

double segment_segment_distance(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                                const Eigen::Vector3d& q0, const Eigen::Vector3d& q1);

// Text config: one `key value...` entry per line, `joint axis_xyz link_xyz lo hi
// radius` per joint. See docs in arm.cpp / README.
ArmModel load_arm_model(std::istream& is);
ArmModel load_arm_model_file(const std::string& path);
void save_arm_model(const ArmModel& model, std::ostream& os);

// Built-in models.
ArmModel planar_2dof_model();
ArmModel arm_6dof_model();

}  // namespace polgrad
