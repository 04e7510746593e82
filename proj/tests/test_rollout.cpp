#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "polgrad/reacher.hpp"
#include "polgrad/rollout.hpp"

using namespace polgrad;

namespace {

// Brute-force double-sum oracle over episode slices.
Vec oracle_rewards_to_go(const Vec& r, const std::vector<std::uint8_t>& term,
                         double bootstrap, double gamma) {
  const Eigen::Index T = r.size();
  Vec out(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double acc = 0.0;
    double g = 1.0;
    Eigen::Index i = t;
    for (; i < T; ++i) {
      acc += g * r[i];
      g *= gamma;
      if (term[static_cast<std::size_t>(i)]) break;
    }
    if (i == T) acc += g * bootstrap;  // ran off a non-terminal cut
    out[t] = acc;
  }
  return out;
}

Vec oracle_gae(const Vec& r, const Vec& v, const std::vector<std::uint8_t>& term,
               double bootstrap, double gamma, double lambda) {
  const Eigen::Index T = r.size();
  Vec out(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double acc = 0.0;
    double w = 1.0;
    for (Eigen::Index i = t; i < T; ++i) {
      const bool tm = term[static_cast<std::size_t>(i)] != 0;
      const double next_v = tm ? 0.0 : (i + 1 < T ? v[i + 1] : bootstrap);
      acc += w * (r[i] + gamma * next_v - v[i]);
      if (tm) break;
      w *= gamma * lambda;
    }
    out[t] = acc;
  }
  return out;
}

struct RandomCase {
  Vec rewards, values;
  std::vector<std::uint8_t> terminals;
  double bootstrap;
};

RandomCase random_case(Rng& rng, int T) {
  RandomCase c;
  c.rewards.resize(T);
  c.values.resize(T);
  c.terminals.assign(static_cast<std::size_t>(T), 0);
  for (int t = 0; t < T; ++t) {
    c.rewards[t] = rng.normal();
    c.values[t] = rng.normal();
    c.terminals[static_cast<std::size_t>(t)] = rng.uniform() < 0.07 ? 1 : 0;
  }
  c.bootstrap = rng.normal();
  return c;
}

// Terminates deterministically after a fixed number of steps.
class FixedLenEnv final : public Env {
 public:
  explicit FixedLenEnv(int len) : len_(len) {
    spec_.name = "fixedlen";
    spec_.obs_dim = 9;
    spec_.act_dim = 2;
    spec_.max_episode_steps = len;
  }
  const EnvSpecInfo& spec() const override { return spec_; }
  void seed(std::uint64_t) override {}
  Eigen::VectorXd reset() override {
    t_ = 0;
    return Eigen::VectorXd::Zero(9);
  }
  Transition step(const Eigen::VectorXd&) override {
    t_ += 1;
    Transition tr;
    tr.observation = Eigen::VectorXd::Constant(9, static_cast<double>(t_));
    tr.reward = 1.0;
    tr.done = t_ >= len_;
    return tr;
  }

 private:
  EnvSpecInfo spec_;
  int len_;
  int t_ = 0;
};

PolicyValueNet tiny_net(std::uint64_t seed = 1) {
  NetSpec spec;
  spec.obs_dim = 9;
  spec.act_dim = 2;
  spec.hidden = {8};
  Rng rng(seed);
  return PolicyValueNet::create(spec, rng);
}

}  // namespace

TEST_CASE("rewards_to_go: gamma 0 reduces to the rewards") {
  Rng rng(1);
  RandomCase c = random_case(rng, 50);
  Vec out = rewards_to_go(c.rewards, c.terminals, c.bootstrap, 0.0);
  CHECK((out - c.rewards).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rewards_to_go: [1,1,1] at gamma 0.5 gives [1.75, 1.5, 1]") {
  Vec r = Vec::Ones(3);
  std::vector<std::uint8_t> term = {0, 0, 1};
  Vec out = rewards_to_go(r, term, 0.0, 0.5);
  CHECK(out[0] == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rewards_to_go and gae match brute-force sums on 100 random cases") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    RandomCase c = random_case(rng, 100);
    const double gamma = rng.uniform(0.5, 0.999);
    const double lambda = rng.uniform(0.0, 1.0);
    Vec rtg = rewards_to_go(c.rewards, c.terminals, c.bootstrap, gamma);
    Vec want_rtg = oracle_rewards_to_go(c.rewards, c.terminals, c.bootstrap, gamma);
    CHECK((rtg - want_rtg).cwiseAbs().maxCoeff() < 1e-10);
    Vec adv =
        gae_advantages(c.rewards, c.values, c.terminals, c.bootstrap, gamma, lambda);
    Vec want_adv =
        oracle_gae(c.rewards, c.values, c.terminals, c.bootstrap, gamma, lambda);
    CHECK((adv - want_adv).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("rewards_to_go satisfies the recursion at every non-terminal step") {
  Rng rng(3);
  RandomCase c = random_case(rng, 80);
  const double gamma = 0.97;
  Vec rtg = rewards_to_go(c.rewards, c.terminals, c.bootstrap, gamma);
  for (int t = 0; t + 1 < 80; ++t)
    if (!c.terminals[static_cast<std::size_t>(t)])
      CHECK(rtg[t] == doctest::Approx(c.rewards[t] + gamma * rtg[t + 1]).epsilon(1e-12));
}

TEST_CASE("gae: gamma 0 gives the one-step residual r - V") {
  Rng rng(4);
  RandomCase c = random_case(rng, 60);
  Vec adv = gae_advantages(c.rewards, c.values, c.terminals, c.bootstrap, 0.0, 0.95);
  CHECK((adv - (c.rewards - c.values)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gae: lambda 0 equals the TD residual exactly") {
  Rng rng(5);
  RandomCase c = random_case(rng, 60);
  const double gamma = 0.9;
  Vec adv = gae_advantages(c.rewards, c.values, c.terminals, c.bootstrap, gamma, 0.0);
  for (int t = 0; t < 60; ++t) {
    const bool tm = c.terminals[static_cast<std::size_t>(t)] != 0;
    const double nv = tm ? 0.0 : (t + 1 < 60 ? c.values[t + 1] : c.bootstrap);
    CHECK(adv[t] == doctest::Approx(c.rewards[t] + gamma * nv - c.values[t])
                        .epsilon(1e-14));
  }
}

TEST_CASE("gae: lambda 1 identity A == R - V") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    RandomCase c = random_case(rng, 70);
    const double gamma = rng.uniform(0.5, 0.999);
    Vec adv = gae_advantages(c.rewards, c.values, c.terminals, c.bootstrap, gamma, 1.0);
    Vec rtg = rewards_to_go(c.rewards, c.terminals, c.bootstrap, gamma);
    CHECK((adv - (rtg - c.values)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("episode isolation: permuting later episodes leaves earlier outputs alone") {
  Rng rng(7);
  const int T = 40;
  RandomCase c = random_case(rng, T);
  // force a terminal at t=19 and none before
  for (int t = 0; t < 20; ++t) c.terminals[static_cast<std::size_t>(t)] = 0;
  c.terminals[19] = 1;
  Vec rtg1 = rewards_to_go(c.rewards, c.terminals, c.bootstrap, 0.99);
  Vec adv1 = gae_advantages(c.rewards, c.values, c.terminals, c.bootstrap, 0.99, 0.95);
  RandomCase d = c;
  // scramble everything after the boundary
  for (int t = 20; t < T; ++t) {
    d.rewards[t] = rng.normal() * 10.0;
    d.values[t] = rng.normal() * 10.0;
  }
  Vec rtg2 = rewards_to_go(d.rewards, d.terminals, d.bootstrap, 0.99);
  Vec adv2 = gae_advantages(d.rewards, d.values, d.terminals, d.bootstrap, 0.99, 0.95);
  CHECK((rtg1.head(20) - rtg2.head(20)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((adv1.head(20) - adv2.head(20)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalize_advantages: constant input maps to zeros") {
  Vec adv = Vec::Constant(16, 3.7);
  normalize_advantages(adv);
  CHECK(adv.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalize_advantages: {-1, 1} is already normalized") {
  Vec adv(2);
  adv << -1.0, 1.0;
  normalize_advantages(adv);
  CHECK(adv[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(adv[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("normalize_advantages: random vector ends up mean 0, std 1") {
  Rng rng(8);
  Vec adv(512);
  for (int i = 0; i < 512; ++i) adv[i] = 4.0 * rng.normal() + 2.0;
  normalize_advantages(adv);
  CHECK(std::abs(adv.mean()) < 1e-12);
  const double std = std::sqrt(adv.array().square().sum() / adv.size() -
                               adv.mean() * adv.mean());
  CHECK(std::abs(std - 1.0) < 1e-12);
}

TEST_CASE("collect: T=1 batch records a bootstrap value") {
  RolloutPool pool([] { return std::make_unique<FixedLenEnv>(10); }, 1, 5);
  PolicyValueNet net = tiny_net();
  TrajectoryBatch b = pool.collect(net, 1);
  REQUIRE(b.T() == 1);
  CHECK(b.terminals[0] == 0);
  REQUIRE(b.bootstrap_values.size() == 1);
  // bootstrap equals the critic value of the next state
  RowVec next_obs = RowVec::Constant(9, 1.0);
  CHECK(b.bootstrap_values[0] == doctest::Approx(net.value(next_obs)).epsilon(1e-15));
}

TEST_CASE("collect: env terminating every 3 steps gives 3 episodes in T=9") {
  RolloutPool pool([] { return std::make_unique<FixedLenEnv>(3); }, 1, 5);
  PolicyValueNet net = tiny_net();
  TrajectoryBatch b = pool.collect(net, 9);
  CHECK(b.episodes.size() == 3);
  int terms = 0;
  for (auto t : b.terminals) terms += t;
  CHECK(terms == 3);
  CHECK(b.episodes[0].length == 3);
  CHECK(b.episodes[0].total_reward == doctest::Approx(3.0));
}

TEST_CASE("collect: fixed seed reproduces the batch bit-identically") {
  auto factory = [] {
    ReacherOptions opts;
    opts.max_episode_steps = 16;
    return make_env("Reach2D-v0", opts);
  };
  PolicyValueNet net = tiny_net(11);
  auto run = [&] {
    RolloutPool pool(factory, 1, 42);
    return pool.collect(net, 64);
  };
  TrajectoryBatch a = run();
  TrajectoryBatch b = run();
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.actions - b.actions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.rewards - b.rewards).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.log_probs - b.log_probs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.terminals == b.terminals);
}

TEST_CASE("collect: two workers are deterministic and merge in worker order") {
  auto factory = [] {
    ReacherOptions opts;
    opts.max_episode_steps = 16;
    return make_env("Reach2D-v0", opts);
  };
  PolicyValueNet net = tiny_net(11);
  auto run = [&] {
    RolloutPool pool(factory, 2, 42);
    return pool.collect(net, 64);
  };
  TrajectoryBatch a = run();
  TrajectoryBatch b = run();
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.actions - b.actions).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.segment_ends.size() == 2);
  CHECK(a.segment_ends[0] == 32);
  CHECK(a.segment_ends[1] == 64);
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].total_reward == b.episodes[i].total_reward);
    CHECK(a.episodes[i].end_step == b.episodes[i].end_step);
  }
}

TEST_CASE("collect: returns/advantages per segment respect worker boundaries") {
  RolloutPool pool([] { return std::make_unique<FixedLenEnv>(7); }, 2, 9);
  PolicyValueNet net = tiny_net();
  TrajectoryBatch b = pool.collect(net, 20);  // 10 rows per worker, cut mid-episode
  compute_returns_and_advantages(b, 0.99, 0.95);
  // row 9 is a non-terminal cut; its return must use worker 0's bootstrap
  std::vector<std::uint8_t> seg_term(b.terminals.begin(), b.terminals.begin() + 10);
  Vec seg_r = b.rewards.segment(0, 10);
  Vec want = rewards_to_go(seg_r, seg_term, b.bootstrap_values[0], 0.99);
  CHECK((b.returns.segment(0, 10) - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rollout pool state round-trips through a snapshot") {
  auto factory = [] {
    ReacherOptions opts;
    opts.max_episode_steps = 16;
    return make_env("Reach2D-v0", opts);
  };
  PolicyValueNet net = tiny_net(13);
  RolloutPool pool(factory, 2, 7);
  pool.collect(net, 64);
  std::stringstream snap;
  pool.save_state(snap);

  RolloutPool pool2(factory, 2, 7);
  pool2.load_state(snap);
  TrajectoryBatch a = pool.collect(net, 64);
  TrajectoryBatch b = pool2.collect(net, 64);
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.actions - b.actions).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.terminals == b.terminals);
}
