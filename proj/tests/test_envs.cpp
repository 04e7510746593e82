#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "polgrad/reacher.hpp"

using namespace polgrad;

namespace {

// Independent FK oracle: composes 4x4 homogeneous transforms.
Eigen::Matrix4d axis_angle_hom(const Eigen::Vector3d& axis, double angle,
                               const Eigen::Vector3d& trans) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  const double c = std::cos(angle), s = std::sin(angle), C = 1.0 - c;
  const double x = axis.x(), y = axis.y(), z = axis.z();
  Eigen::Matrix3d R;
  R << c + x * x * C, x * y * C - z * s, x * z * C + y * s,  //
      y * x * C + z * s, c + y * y * C, y * z * C - x * s,   //
      z * x * C - y * s, z * y * C + x * s, c + z * z * C;
  T.topLeftCorner<3, 3>() = R;
  T.topRightCorner<3, 1>() = R * trans;
  return T;
}

Eigen::Vector3d oracle_fk_position(const ArmModel& m, const Eigen::VectorXd& q) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topRightCorner<3, 1>() = m.base_position;
  for (int i = 0; i < m.dof(); ++i) {
    const auto& j = m.joints[static_cast<std::size_t>(i)];
    T = T * axis_angle_hom(j.axis, q[i], j.link);
  }
  return T.topRightCorner<3, 1>();
}

}  // namespace

TEST_CASE("fk: straight 2-link chain reaches (2,0,0)") {
  ArmModel m = planar_2dof_model();
  Pose p = forward_kinematics(m, Eigen::Vector2d(0, 0));
  CHECK((p.position - Eigen::Vector3d(2, 0, 0)).norm() < 1e-15);
}

TEST_CASE("fk: first joint at pi/2 reaches (0,2,0)") {
  ArmModel m = planar_2dof_model();
  Pose p = forward_kinematics(m, Eigen::Vector2d(M_PI / 2, 0));
  CHECK((p.position - Eigen::Vector3d(0, 2, 0)).norm() < 1e-12);
}

TEST_CASE("fk: 6-DoF model matches homogeneous-transform oracle") {
  ArmModel m = arm_6dof_model();
  SUBCASE("zero pose") {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
    Pose p = forward_kinematics(m, q);
    CHECK((p.position - oracle_fk_position(m, q)).norm() < 1e-12);
    CHECK((p.position - Eigen::Vector3d(0, 0, 1.05)).norm() < 1e-12);
  }
  SUBCASE("random poses") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd q(6);
      for (int i = 0; i < 6; ++i) q[i] = rng.uniform(-3.0, 3.0);
      Pose p = forward_kinematics(m, q);
      CHECK((p.position - oracle_fk_position(m, q)).norm() < 1e-12);
    }
  }
}

TEST_CASE("fk: quaternion outputs stay unit-norm over 1e6 random evaluations") {
  ArmModel m = arm_6dof_model();
  Rng rng(32);
  Eigen::VectorXd q(6);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    for (int k = 0; k < 6; ++k) q[k] = rng.uniform(-3.14, 3.14);
    const Pose p = forward_kinematics(m, q);
    worst = std::max(worst, std::abs(p.orientation.norm() - 1.0));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("reset: zero joints, observation layout, determinism") {
  auto env = make_env("Reach6D-v0");
  env->seed(7);
  Eigen::VectorXd obs = env->reset();
  REQUIRE(obs.size() == 13);
  CHECK(obs.head(6).cwiseAbs().maxCoeff() == 0.0);
  // end-effector section equals FK at zero
  Pose p0 = forward_kinematics(arm_6dof_model(), Eigen::VectorXd::Zero(6));
  CHECK((obs.segment(6, 3) - p0.position).norm() < 1e-15);
  CHECK(obs[9] == doctest::Approx(p0.orientation.w()));
  Eigen::VectorXd obs2 = env->reset();
  CHECK((obs - obs2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("step: zero action leaves pose and reward unchanged") {
  auto env = make_env("Reach2D-v0");
  env->reset();
  Transition t1 = env->step(Eigen::Vector2d(0, 0));
  Transition t2 = env->step(Eigen::Vector2d(0, 0));
  CHECK(t1.reward == t2.reward);
  CHECK((t1.observation - t2.observation).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("step: done exactly at max_episode_steps") {
  ReacherOptions opts;
  opts.max_episode_steps = 5;
  auto env = make_env("Reach2D-v0", opts);
  env->reset();
  for (int i = 1; i <= 5; ++i) {
    Transition t = env->step(Eigen::Vector2d(0.01, 0.01));
    CHECK(t.done == (i == 5));
  }
}

TEST_CASE("step: replaying a logged action sequence is bit-identical") {
  Rng rng(33);
  auto run = [&](const std::vector<Eigen::VectorXd>& actions) {
    auto env = make_env("Reach6D-v0");
    env->seed(3);
    std::vector<double> rewards;
    Eigen::VectorXd obs = env->reset();
    std::vector<Eigen::VectorXd> observations{obs};
    for (const auto& a : actions) {
      Transition t = env->step(a);
      rewards.push_back(t.reward);
      observations.push_back(t.observation);
    }
    return std::make_pair(rewards, observations);
  };
  std::vector<Eigen::VectorXd> actions;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd a(6);
    for (int k = 0; k < 6; ++k) a[k] = rng.uniform(-0.2, 0.2);
    actions.push_back(a);
  }
  auto [r1, o1] = run(actions);
  auto [r2, o2] = run(actions);
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
  for (std::size_t i = 0; i < o1.size(); ++i)
    CHECK((o1[i] - o2[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("step: non-finite action is an environment fault") {
  auto env = make_env("Reach2D-v0");
  env->reset();
  Eigen::Vector2d bad(std::nan(""), 0.0);
  CHECK_THROWS_AS(env->step(bad), EnvFault);
}

TEST_CASE("reward: zero distance gives the maximum of 0") {
  Pose target;
  target.position = Eigen::Vector3d(0.3, -0.2, 0.5);
  CHECK(reward_for(RewardVariant::kReach, target, target, false) == 0.0);
}

TEST_CASE("reward: orientation term honors the quaternion double cover") {
  Pose pose, target;
  pose.position = target.position = Eigen::Vector3d::Zero();
  target.orientation = Eigen::Quaterniond(0.0, 0.7071068, 0.7071068, 0.0);
  pose.orientation = target.orientation;
  CHECK(reward_for(RewardVariant::kReachOrient, pose, target, false) ==
        doctest::Approx(0.0).epsilon(1e-12));
  pose.orientation.coeffs() = -target.orientation.coeffs();
  CHECK(reward_for(RewardVariant::kReachOrient, pose, target, false) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reward: random pose matches direct recomputation") {
  Rng rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    Pose pose, target;
    for (int i = 0; i < 3; ++i) {
      pose.position[i] = rng.normal();
      target.position[i] = rng.normal();
    }
    const double want = -std::sqrt((pose.position - target.position).squaredNorm());
    CHECK(std::abs(reward_for(RewardVariant::kReach, pose, target, false) - want) <
          1e-12);
  }
}

TEST_CASE("reward: bounded above by zero for all variants") {
  Rng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    Pose pose, target;
    for (int i = 0; i < 3; ++i) {
      pose.position[i] = rng.normal();
      target.position[i] = rng.normal();
    }
    pose.orientation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(),
                                          rng.normal());
    pose.orientation.normalize();
    const bool collided = rng.uniform() < 0.3;
    for (auto v : {RewardVariant::kReach, RewardVariant::kReachOrient,
                   RewardVariant::kReachCollision, RewardVariant::kReachCollisionOrient})
      CHECK(reward_for(v, pose, target, collided) <= 0.0);
  }
}

TEST_CASE("collision: upright zero pose is collision-free") {
  ArmModel m = arm_6dof_model();
  CHECK_FALSE(collision_check(m, Eigen::VectorXd::Zero(6)));
}

TEST_CASE("collision: folding the shoulder drives the arm through the table") {
  ArmModel m = arm_6dof_model();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  q[1] = M_PI;  // shoulder pitch straight down
  // geometric oracle: the elbow sits below the plane
  auto pts = chain_points(m, q);
  bool below = false;
  for (std::size_t i = 2; i < pts.size(); ++i) below = below || pts[i].z() < 0.0;
  REQUIRE(below);
  CHECK(collision_check(m, q));
}

TEST_CASE("collision: episode terminates with penalty in collision variants") {
  ReacherOptions opts;
  opts.max_episode_steps = 100000;
  auto env = make_env("ReachCollision6D-v0", opts);
  env->reset();
  // drive the shoulder down until contact
  Eigen::VectorXd a = Eigen::VectorXd::Zero(6);
  a[1] = 0.1;
  bool terminated = false;
  double final_reward = 0.0;
  for (int i = 0; i < 40; ++i) {
    Transition t = env->step(a);
    if (t.done) {
      terminated = true;
      final_reward = t.reward;
      break;
    }
  }
  CHECK(terminated);
  CHECK(final_reward <= -kCollisionPenalty);
}

TEST_CASE("collision: adjacent links are never flagged") {
  // A sharp elbow fold brings adjacent links together; only non-adjacent
  // pairs may trigger.
  ArmModel m = arm_6dof_model();
  m.has_table = false;  // isolate self-collision
  Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
  q[2] = 3.1;  // elbow almost fully folded
  auto pts = chain_points(m, q);
  const double elbow_gap =
      segment_segment_distance(pts[1], pts[2], pts[3], pts[4]);
  // oracle: the fold is real (link 1 and link 3 nearly touch) ...
  REQUIRE(elbow_gap < 0.12);
  // ... and collision_check agrees with the capsule-pair oracle
  bool expect = false;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 2; j < 6; ++j)
      expect = expect ||
               segment_segment_distance(pts[static_cast<std::size_t>(i)],
                                        pts[static_cast<std::size_t>(i) + 1],
                                        pts[static_cast<std::size_t>(j)],
                                        pts[static_cast<std::size_t>(j) + 1]) <
                   m.link_radius[static_cast<std::size_t>(i)] +
                       m.link_radius[static_cast<std::size_t>(j)];
  CHECK(collision_check(m, q) == expect);
}

TEST_CASE("paper target pose is reachable by the 6-DoF model") {
  // coarse joint-space search gets within a couple of centimeters
  ArmModel m = arm_6dof_model();
  const Eigen::Vector3d target(-0.40028, 0.095615, 0.72466);
  Rng rng(36);
  Eigen::VectorXd best = Eigen::VectorXd::Zero(6);
  double best_d = (forward_kinematics(m, best).position - target).norm();
  for (int iter = 0; iter < 20000; ++iter) {
    Eigen::VectorXd q = best;
    for (int k = 0; k < 6; ++k) q[k] += rng.normal() * 0.2;
    for (int k = 0; k < 6; ++k)
      q[k] = std::clamp(q[k], m.joints[static_cast<std::size_t>(k)].limit_lo,
                        m.joints[static_cast<std::size_t>(k)].limit_hi);
    const double d = (forward_kinematics(m, q).position - target).norm();
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  CHECK(best_d < 0.02);
  CHECK_FALSE(collision_check(m, best));
}

TEST_CASE("arm config round-trips through the text format") {
  ArmModel m = arm_6dof_model();
  std::stringstream ss;
  save_arm_model(m, ss);
  ArmModel n = load_arm_model(ss);
  REQUIRE(n.dof() == m.dof());
  CHECK(n.has_table == m.has_table);
  CHECK(n.max_joint_delta == m.max_joint_delta);
  for (int i = 0; i < m.dof(); ++i) {
    CHECK((n.joints[static_cast<std::size_t>(i)].axis -
           m.joints[static_cast<std::size_t>(i)].axis)
              .norm() == 0.0);
    CHECK((n.joints[static_cast<std::size_t>(i)].link -
           m.joints[static_cast<std::size_t>(i)].link)
              .norm() == 0.0);
  }
  Eigen::VectorXd q(6);
  q << 0.3, -0.5, 0.7, 1.1, -0.2, 0.4;
  CHECK((forward_kinematics(m, q).position - forward_kinematics(n, q).position)
            .norm() == 0.0);
}

TEST_CASE("env state snapshot restores mid-episode exactly") {
  auto env = make_env("Reach6D-v0");
  env->seed(5);
  env->reset();
  Rng rng(37);
  Eigen::VectorXd a(6);
  for (int i = 0; i < 17; ++i) {
    for (int k = 0; k < 6; ++k) a[k] = rng.uniform(-0.1, 0.1);
    env->step(a);
  }
  std::stringstream snap;
  REQUIRE(env->save_state(snap));

  for (int k = 0; k < 6; ++k) a[k] = 0.05;
  Transition t1 = env->step(a);

  auto env2 = make_env("Reach6D-v0");
  REQUIRE(env2->load_state(snap));
  Transition t2 = env2->step(a);
  CHECK(t1.reward == t2.reward);
  CHECK((t1.observation - t2.observation).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unknown environment name is a config error") {
  CHECK_THROWS_AS(make_env("Reach9D-v0"), ConfigError);
}
