#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "polgrad/reacher.hpp"
#include "polgrad/trpo.hpp"
#include "test_helpers.hpp"

using namespace polgrad;

namespace {

PolicyValueNet small_net(std::uint64_t seed = 1) {
  NetSpec spec;
  spec.obs_dim = 4;
  spec.act_dim = 2;
  spec.hidden = {8};
  Rng rng(seed);
  return PolicyValueNet::create(spec, rng);
}

// Batch drawn from the net's own policy so that log_probs are consistent.
TrajectoryBatch random_batch(const PolicyValueNet& net, int T, std::uint64_t seed) {
  Rng rng(seed);
  TrajectoryBatch b;
  b.states.resize(T, net.obs_dim());
  b.actions.resize(T, net.act_dim());
  b.rewards.resize(T);
  b.terminals.assign(static_cast<std::size_t>(T), 0);
  b.log_probs.resize(T);
  b.old_mean.resize(T, net.act_dim());
  b.old_log_std.resize(T, net.act_dim());
  b.values.resize(T);
  b.returns.resize(T);
  b.advantages.resize(T);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < net.obs_dim(); ++c) b.states(t, c) = rng.normal();
    DiagonalGaussian d;
    d.mean = net.policy_mean_batch(b.states.row(t)).row(0);
    d.log_std = net.clamped_log_std();
    const RowVec a = sample(d, rng);
    b.actions.row(t) = a;
    b.log_probs[t] = log_prob(d, a);
    b.old_mean.row(t) = d.mean;
    b.old_log_std.row(t) = d.log_std;
    b.rewards[t] = rng.normal();
    b.values[t] = rng.normal();
    b.returns[t] = rng.normal();
    b.advantages[t] = rng.normal();
  }
  b.segment_ends = {T};
  b.bootstrap_values = {0.0};
  return b;
}

}  // namespace

TEST_CASE("surrogate at theta_k equals mean advantage (ratio is 1)") {
  PolicyValueNet net = small_net();
  TrajectoryBatch b = random_batch(net, 32, 3);
  CHECK(surrogate_value(net, b) ==
        doctest::Approx(b.advantages.mean()).epsilon(1e-12));
  normalize_advantages(b.advantages);
  CHECK(std::abs(surrogate_value(net, b)) < 1e-10);
}

TEST_CASE("surrogate gradient matches finite differences") {
  PolicyValueNet net = small_net(5);
  TrajectoryBatch b = random_batch(net, 16, 7);
  Vec g = policy_gradient_estimate(net, b);
  PolicyValueNet scratch = net;
  auto f = [&](const Vec& theta) {
    scratch.set_policy_from_flat(theta);
    return surrogate_value(scratch, b);
  };
  Vec fd = test::fd_gradient(f, net.flatten_policy());
  CHECK(test::rel_err(g, fd) < 1e-4);
}

TEST_CASE("policy gradient: zero advantages give zero gradient, and it is linear") {
  PolicyValueNet net = small_net(9);
  TrajectoryBatch b = random_batch(net, 16, 11);
  TrajectoryBatch zero = b;
  zero.advantages.setZero();
  CHECK(policy_gradient_estimate(net, zero).cwiseAbs().maxCoeff() == 0.0);
  Vec g1 = policy_gradient_estimate(net, b);
  TrajectoryBatch doubled = b;
  doubled.advantages *= 2.0;
  Vec g2 = policy_gradient_estimate(net, doubled);
  CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + g1.cwiseAbs().maxCoeff()));
}

TEST_CASE("cg: identity system solves in one iteration") {
  Vec g(4);
  g << 1, -2, 3, -4;
  CgResult r = conjugate_gradient([](const Vec& v) { return v; }, g, 10, 1e-12);
  CHECK(r.iterations == 1);
  CHECK((r.x - g).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cg: zero right-hand side returns zero") {
  CgResult r =
      conjugate_gradient([](const Vec& v) { return v; }, Vec::Zero(6), 10, 1e-10);
  CHECK(r.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.iterations == 0);
}

TEST_CASE("cg: 100 random SPD systems match the dense direct solve") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(63));
    Eigen::MatrixXd B(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) B(r, c) = rng.normal();
    Eigen::MatrixXd A = B * B.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Vec g(n);
    for (int i = 0; i < n; ++i) g[i] = rng.normal();
    CgResult r = conjugate_gradient([&](const Vec& v) { return Vec(A * v); }, g,
                                    2 * n, 1e-12);
    Vec direct = A.llt().solve(g);
    CHECK(r.residual_norm < 1e-8 * (1.0 + g.norm()));
    CHECK((r.x - direct).norm() < 1e-8 * (1.0 + direct.norm()));
  }
}

TEST_CASE("cg: non-finite operator output aborts with a diagnostic") {
  Vec g = Vec::Ones(3);
  auto bad = [](const Vec& v) {
    Vec out = v;
    out[0] = std::numeric_limits<double>::quiet_NaN();
    return out;
  };
  CHECK_THROWS_AS(conjugate_gradient(bad, g, 5, 1e-10), Error);
}

TEST_CASE("line search: full step multiplier is 1 when x'Hx == 2 delta") {
  // quadratic toy objective with exact curvature: surrogate(theta) =
  // g . (theta - theta0) - 0.5 (theta - theta0)' H (theta - theta0),
  // kl(theta) = 0.5 (theta - theta0)' H (theta - theta0)
  const int n = 6;
  Rng rng(17);
  Eigen::MatrixXd B(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) B(r, c) = rng.normal();
  Eigen::MatrixXd H = B * B.transpose() + Eigen::MatrixXd::Identity(n, n);
  Vec g(n);
  for (int i = 0; i < n; ++i) g[i] = rng.normal();
  Vec theta0 = Vec::Zero(n);
  const double delta = 0.01;

  Vec x = H.llt().solve(g);
  const double shs = x.dot(H * x);
  const double beta = std::sqrt(2.0 * delta / shs);
  Vec full_step = beta * x;
  // beta is exactly 1 when x'Hx == 2 delta
  Vec x_scaled = x * std::sqrt(2.0 * delta / shs);
  CHECK(x_scaled.dot(H * x_scaled) == doctest::Approx(2.0 * delta).epsilon(1e-12));

  auto surrogate = [&](const Vec& th) {
    Vec d = th - theta0;
    return g.dot(d) - 0.5 * d.dot(H * d);
  };
  auto klf = [&](const Vec& th) {
    Vec d = th - theta0;
    return 0.5 * d.dot(H * d);
  };
  LineSearchResult res = backtracking_line_search(theta0, full_step, 0.0, delta, 0.8,
                                                  10, surrogate, klf);
  // exact Hessian: the full step is accepted immediately and lands on KL == delta
  CHECK(res.accepted);
  CHECK(res.backtracks == 0);
  CHECK(res.kl == doctest::Approx(delta).epsilon(1e-6));
}

TEST_CASE("line search: zero step leaves theta unchanged (rejection path)") {
  Vec theta0(3);
  theta0 << 1, 2, 3;
  auto surrogate = [](const Vec&) { return 0.0; };  // never improves
  auto klf = [](const Vec&) { return 0.0; };
  LineSearchResult res = backtracking_line_search(theta0, Vec::Zero(3), 0.0, 0.01,
                                                  0.8, 5, surrogate, klf);
  CHECK_FALSE(res.accepted);
  CHECK((res.theta - theta0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit_value_function: perfect fit does not move parameters") {
  PolicyValueNet net = small_net(19);
  TrajectoryBatch b = random_batch(net, 16, 21);
  b.returns = net.value_batch(b.states);  // targets already matched
  const PolicyValueNet& cnet = net;
  const Vec before = flatten_params(cnet.value_param_mats());
  auto [mse0, mse1] = fit_value_function(net, b, 10, 1e-3);
  const Vec after = flatten_params(cnet.value_param_mats());
  CHECK(mse0 < 1e-20);
  CHECK(mse1 <= mse0 + 1e-18);
  CHECK((after - before).norm() < 1e-9);
}

TEST_CASE("fit_value_function: single state converges to its return") {
  PolicyValueNet net = small_net(23);
  TrajectoryBatch b = random_batch(net, 1, 25);
  b.returns[0] = 3.21;
  fit_value_function(net, b, 2000, 1e-2);
  CHECK(std::abs(net.value_batch(b.states)[0] - 3.21) < 1e-3);
}

TEST_CASE("fit_value_function: loss decreases on a random batch") {
  PolicyValueNet net = small_net(27);
  TrajectoryBatch b = random_batch(net, 64, 29);
  auto [before, after] = fit_value_function(net, b, 25, 1e-3);
  CHECK(after <= before);
}

TEST_CASE("trpo_update: accepted steps respect the KL limit and improve the surrogate") {
  TrainConfig cfg;
  cfg.algo = "trpo";
  PolicyValueNet net = small_net(31);
  TrpoTrainer trainer(cfg);
  Rng rng(33);
  int accepted = 0;
  for (int k = 0; k < 10; ++k) {
    TrajectoryBatch b = random_batch(net, 64, 100 + static_cast<std::uint64_t>(k));
    normalize_advantages(b.advantages);
    TrpoReport rep = trainer.update(net, b);
    if (rep.accepted) {
      accepted += 1;
      CHECK(rep.kl <= cfg.trpo_delta + 1e-8);
      CHECK(rep.surrogate_after > rep.surrogate_before);
    }
    CHECK(rep.value_loss_after <= rep.value_loss_before + 1e-12);
  }
  CHECK(accepted >= 8);  // random advantages still admit improving steps
  (void)rng;
}

TEST_CASE("trpo_update: delta -> 0 freezes the policy") {
  TrainConfig cfg;
  cfg.algo = "trpo";
  cfg.trpo_delta = 1e-14;
  PolicyValueNet net = small_net(35);
  const Vec theta0 = net.flatten_policy();
  TrpoTrainer trainer(cfg);
  TrajectoryBatch b = random_batch(net, 64, 37);
  normalize_advantages(b.advantages);
  trainer.update(net, b);
  CHECK((net.flatten_policy() - theta0).norm() < 1e-6);
}

TEST_CASE("kl hvp operator is symmetric positive definite under damping") {
  PolicyValueNet net = small_net(39);
  TrajectoryBatch b = random_batch(net, 32, 41);
  MatVec avp = make_kl_hvp(net, b, 0.1);
  Rng rng(43);
  const auto n = net.flatten_policy().size();
  Vec u(n), v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u[i] = rng.normal();
    v[i] = rng.normal();
  }
  CHECK(std::abs(u.dot(avp(v)) - v.dot(avp(u))) < 1e-8);
  CHECK(u.dot(avp(u)) > 0.0);
}
