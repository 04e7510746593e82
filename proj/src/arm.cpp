#include "polgrad/arm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace polgrad {

double ArmModel::reach() const {
  double r = 0.0;
  for (const ArmJoint& j : joints) r += j.link.norm();
  return r;
}

void ArmModel::validate() const {
  if (joints.empty()) throw ContractError("ArmModel: chain length must be >= 1");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (std::abs(joints[i].axis.norm() - 1.0) > 1e-9)
      throw ContractError("ArmModel: joint " + std::to_string(i) +
                          " axis is not unit-norm");
    if (!(joints[i].limit_lo < joints[i].limit_hi))
      throw ContractError("ArmModel: joint " + std::to_string(i) + " limits inverted");
  }
  if (link_radius.size() != joints.size())
    throw ContractError("ArmModel: need one collision radius per link");
}

Pose forward_kinematics(const ArmModel& model, const Eigen::VectorXd& joints) {
  if (joints.size() != model.dof())
    throw ContractError("forward_kinematics: expected " + std::to_string(model.dof()) +
                        " joints, got " + std::to_string(joints.size()));
  Pose pose;
  pose.position = model.base_position;
  for (int i = 0; i < model.dof(); ++i) {
    const ArmJoint& j = model.joints[i];
    pose.orientation =
        pose.orientation * Eigen::Quaterniond(Eigen::AngleAxisd(joints[i], j.axis));
    pose.position += pose.orientation * j.link;
  }
  pose.orientation.normalize();
  return pose;
}

std::vector<Eigen::Vector3d> chain_points(const ArmModel& model,
                                          const Eigen::VectorXd& joints) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(model.dof()) + 1);
  Eigen::Vector3d p = model.base_position;
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  pts.push_back(p);
  for (int i = 0; i < model.dof(); ++i) {
    const ArmJoint& j = model.joints[i];
    q = q * Eigen::Quaterniond(Eigen::AngleAxisd(joints[i], j.axis));
    p += q * j.link;
    pts.push_back(p);
  }
  return pts;
}

double segment_segment_distance(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                                const Eigen::Vector3d& q0, const Eigen::Vector3d& q1) {
  // Closest distance between segments [p0,p1] and [q0,q1] (Ericson 5.1.9).
  const Eigen::Vector3d d1 = p1 - p0;
  const Eigen::Vector3d d2 = q1 - q0;
  const Eigen::Vector3d r = p0 - q0;
  const double a = d1.dot(d1);
  const double e = d2.dot(d2);
  const double f = d2.dot(r);
  double s, t;
  constexpr double kEps = 1e-12;
  if (a <= kEps && e <= kEps) return r.norm();
  if (a <= kEps) {
    s = 0.0;
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      t = 0.0;
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

bool collision_check(const ArmModel& model, const Eigen::VectorXd& joints) {
  const auto pts = chain_points(model, joints);
  const int n = model.dof();
  if (model.has_table) {
    // Link 0 is the mounted base column and is allowed to touch the plane.
    for (int i = 1; i < n; ++i) {
      const double low = std::min(pts[static_cast<std::size_t>(i)].z(),
                                  pts[static_cast<std::size_t>(i) + 1].z());
      if (low - model.link_radius[static_cast<std::size_t>(i)] < model.table_z)
        return true;
    }
  }
  // self collision between non-adjacent links
  for (int i = 0; i < n; ++i) {
    for (int j = i + 2; j < n; ++j) {
      const double d = segment_segment_distance(
          pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(i) + 1],
          pts[static_cast<std::size_t>(j)], pts[static_cast<std::size_t>(j) + 1]);
      if (d < model.link_radius[static_cast<std::size_t>(i)] +
                  model.link_radius[static_cast<std::size_t>(j)])
        return true;
    }
  }
  return false;
}

// Config format, one entry per line ('#' comments):
//   base x y z
//   table z
//   max_joint_delta v
//   joint ax ay az lx ly lz lo hi radius
ArmModel load_arm_model(std::istream& is) {
  ArmModel m;
  m.has_table = false;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "base") {
      ls >> m.base_position.x() >> m.base_position.y() >> m.base_position.z();
    } else if (key == "table") {
      m.has_table = true;
      ls >> m.table_z;
    } else if (key == "max_joint_delta") {
      ls >> m.max_joint_delta;
    } else if (key == "joint") {
      ArmJoint j;
      double radius = 0.0;
      ls >> j.axis.x() >> j.axis.y() >> j.axis.z() >> j.link.x() >> j.link.y() >>
          j.link.z() >> j.limit_lo >> j.limit_hi >> radius;
      if (!ls) throw ConfigError("arm config: malformed joint line: " + line);
      m.joints.push_back(j);
      m.link_radius.push_back(radius);
    } else {
      throw ConfigError("arm config: unknown key '" + key + "'");
    }
  }
  m.validate();
  return m;
}

ArmModel load_arm_model_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("arm config: cannot open " + path);
  return load_arm_model(f);
}

void save_arm_model(const ArmModel& m, std::ostream& os) {
  os << "base " << fmt_g17(m.base_position.x()) << " " << fmt_g17(m.base_position.y())
     << " " << fmt_g17(m.base_position.z()) << "\n";
  if (m.has_table) os << "table " << fmt_g17(m.table_z) << "\n";
  os << "max_joint_delta " << fmt_g17(m.max_joint_delta) << "\n";
  for (std::size_t i = 0; i < m.joints.size(); ++i) {
    const ArmJoint& j = m.joints[i];
    os << "joint " << fmt_g17(j.axis.x()) << " " << fmt_g17(j.axis.y()) << " "
       << fmt_g17(j.axis.z()) << " " << fmt_g17(j.link.x()) << " "
       << fmt_g17(j.link.y()) << " " << fmt_g17(j.link.z()) << " "
       << fmt_g17(j.limit_lo) << " " << fmt_g17(j.limit_hi) << " "
       << fmt_g17(m.link_radius[i]) << "\n";
  }
}

ArmModel planar_2dof_model() {
  ArmModel m;
  const Eigen::Vector3d z(0, 0, 1);
  m.joints.push_back({z, Eigen::Vector3d(1.0, 0, 0)});
  m.joints.push_back({z, Eigen::Vector3d(1.0, 0, 0)});
  m.link_radius = {0.05, 0.05};
  m.has_table = false;
  return m;
}

ArmModel arm_6dof_model() {
  // Desk-scale 6-DoF chain: yaw base column, two pitch arm segments, then a
  // roll-pitch-roll wrist. Total reach 1.05 m, base on a table plane at z = 0.
  ArmModel m;
  const Eigen::Vector3d y(0, 1, 0), z(0, 0, 1);
  m.joints.push_back({z, Eigen::Vector3d(0, 0, 0.20)});  // base yaw
  m.joints.push_back({y, Eigen::Vector3d(0, 0, 0.35)});  // shoulder pitch
  m.joints.push_back({y, Eigen::Vector3d(0, 0, 0.30)});  // elbow pitch
  m.joints.push_back({z, Eigen::Vector3d(0, 0, 0.07)});  // wrist roll
  m.joints.push_back({y, Eigen::Vector3d(0, 0, 0.07)});  // wrist pitch
  m.joints.push_back({z, Eigen::Vector3d(0, 0, 0.06)});  // wrist roll
  m.link_radius = {0.06, 0.05, 0.04, 0.02, 0.02, 0.02};
  m.has_table = true;
  m.table_z = 0.0;
  return m;
}

}  // namespace polgrad
