#include "polgrad/rollout.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace polgrad {

Vec rewards_to_go(const Vec& rewards, const std::vector<std::uint8_t>& terminals,
                  double bootstrap, double gamma) {
  const Eigen::Index T = rewards.size();
  if (static_cast<Eigen::Index>(terminals.size()) != T)
    throw ContractError("rewards_to_go: length mismatch");
  Vec out(T);
  double acc = bootstrap;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (terminals[static_cast<std::size_t>(t)]) acc = 0.0;
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

Vec gae_advantages(const Vec& rewards, const Vec& values,
                   const std::vector<std::uint8_t>& terminals, double bootstrap,
                   double gamma, double lambda) {
  const Eigen::Index T = rewards.size();
  if (values.size() != T || static_cast<Eigen::Index>(terminals.size()) != T)
    throw ContractError("gae_advantages: length mismatch");
  Vec adv(T);
  double running = 0.0;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const bool term = terminals[static_cast<std::size_t>(t)] != 0;
    const double next_value = term ? 0.0 : (t + 1 < T ? values[t + 1] : bootstrap);
    if (term) running = 0.0;
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

void normalize_advantages(Vec& adv) {
  if (adv.size() == 0) return;
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().sum() / adv.size();
  const double std = std::sqrt(var);
  if (std < 1e-8) {
    adv.setZero();
    return;
  }
  adv = (adv.array() - mean) / std;
}

void compute_returns_and_advantages(TrajectoryBatch& batch, double gamma,
                                    double lambda) {
  batch.returns.resize(batch.T());
  batch.advantages.resize(batch.T());
  int start = 0;
  for (int seg = 0; seg < batch.segments(); ++seg) {
    const int end = batch.segment_ends[static_cast<std::size_t>(seg)];
    const int len = end - start;
    const double boot = batch.bootstrap_values[static_cast<std::size_t>(seg)];
    Vec r = batch.rewards.segment(start, len);
    Vec v = batch.values.segment(start, len);
    std::vector<std::uint8_t> term(batch.terminals.begin() + start,
                                   batch.terminals.begin() + end);
    batch.returns.segment(start, len) = rewards_to_go(r, term, boot, gamma);
    batch.advantages.segment(start, len) =
        gae_advantages(r, v, term, boot, gamma, lambda);
    start = end;
  }
}

void collect_segment(RolloutWorker& worker, const PolicyValueNet& net, int steps,
                     TrajectoryBatch& out, int row_offset, long long steps_before,
                     std::vector<CompletedEpisode>& episodes_out,
                     double& bootstrap_out) {
  Env& env = *worker.env;
  const int M = net.act_dim();
  const RowVec log_std = net.clamped_log_std();
  for (int i = 0; i < steps; ++i) {
    if (worker.needs_reset) {
      worker.last_obs = env.reset();
      worker.needs_reset = false;
      worker.episode_return = 0.0;
      worker.episode_len = 0;
    }
    const int row = row_offset + i;
    const RowVec obs = worker.last_obs.transpose();

    DiagonalGaussian dist;
    dist.mean = net.policy_mean_batch(Mat(obs)).row(0);
    dist.log_std = log_std;
    const RowVec action = sample(dist, worker.rng);
    const double logp = log_prob(dist, action);
    const double value = net.value(obs);

    Transition tr;
    try {
      tr = env.step(action.transpose());
    } catch (const EnvFault& e) {
      throw EnvFault(std::string(e.what()) + " (segment row " + std::to_string(row) +
                     ")");
    }

    out.states.row(row) = obs;
    out.actions.row(row) = action;
    out.rewards[row] = tr.reward;
    out.terminals[static_cast<std::size_t>(row)] = tr.done ? 1 : 0;
    out.log_probs[row] = logp;
    out.old_mean.row(row) = dist.mean;
    out.old_log_std.row(row) = log_std;
    out.values[row] = value;

    worker.episode_return += tr.reward;
    worker.episode_len += 1;
    worker.last_obs = tr.observation;
    if (tr.done) {
      CompletedEpisode ep;
      ep.total_reward = worker.episode_return;
      ep.length = worker.episode_len;
      ep.end_step = steps_before + i + 1;
      episodes_out.push_back(ep);
      worker.needs_reset = true;
    }
  }
  // bootstrap for a mid-episode cut; 0 when the last row closed an episode
  const int last = row_offset + steps - 1;
  bootstrap_out = out.terminals[static_cast<std::size_t>(last)]
                      ? 0.0
                      : net.value(worker.last_obs.transpose());
}

RolloutPool::RolloutPool(const EnvFactory& factory, int workers, std::uint64_t seed) {
  if (workers < 1) throw ConfigError("RolloutPool: workers must be >= 1");
  for (int w = 0; w < workers; ++w) {
    RolloutWorker rw;
    rw.env = factory();
    rw.env->seed(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(w) + 101)));
    rw.rng = Rng::derive(seed, static_cast<std::uint64_t>(w) + 1);
    workers_.push_back(std::move(rw));
  }
}

TrajectoryBatch RolloutPool::collect(const PolicyValueNet& net, int total_steps) {
  const int W = workers();
  if (total_steps % W != 0)
    throw ConfigError("RolloutPool::collect: horizon " + std::to_string(total_steps) +
                      " not divisible by " + std::to_string(W) + " workers");
  const int per = total_steps / W;

  TrajectoryBatch batch;
  batch.states.resize(total_steps, net.obs_dim());
  batch.actions.resize(total_steps, net.act_dim());
  batch.rewards.resize(total_steps);
  batch.terminals.assign(static_cast<std::size_t>(total_steps), 0);
  batch.log_probs.resize(total_steps);
  batch.old_mean.resize(total_steps, net.act_dim());
  batch.old_log_std.resize(total_steps, net.act_dim());
  batch.values.resize(total_steps);

  std::vector<std::vector<CompletedEpisode>> episodes(static_cast<std::size_t>(W));
  std::vector<double> bootstraps(static_cast<std::size_t>(W), 0.0);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(W));
  std::vector<std::thread> threads;
  const long long base_steps = total_env_steps_;
  for (int w = 0; w < W; ++w) {
    // Each worker fills its own disjoint row range of the shared batch.
    threads.emplace_back([&, w]() {
      try {
        collect_segment(workers_[static_cast<std::size_t>(w)], net, per, batch,
                        w * per, base_steps + static_cast<long long>(w) * per,
                        episodes[static_cast<std::size_t>(w)],
                        bootstraps[static_cast<std::size_t>(w)]);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  total_env_steps_ += total_steps;
  int end = 0;
  for (int w = 0; w < W; ++w) {
    end += per;
    batch.segment_ends.push_back(end);
    batch.bootstrap_values.push_back(bootstraps[static_cast<std::size_t>(w)]);
    batch.episodes.insert(batch.episodes.end(),
                          episodes[static_cast<std::size_t>(w)].begin(),
                          episodes[static_cast<std::size_t>(w)].end());
  }
  return batch;
}

void RolloutPool::save_state(std::ostream& os) const {
  os << "rollout_pool " << workers() << " " << total_env_steps_ << "\n";
  for (const RolloutWorker& w : workers_) {
    os << "worker ";
    w.rng.save(os);
    os << "\n";
    os << "episode " << fmt_hex(w.episode_return) << " " << w.episode_len << " "
       << (w.needs_reset ? 1 : 0) << "\n";
    // A transport-backed env has no snapshot; the checkpoint stays loadable
    // for evaluation but refuses to resume.
    std::ostringstream env_state;
    if (w.env->save_state(env_state))
      os << "env ok\n" << env_state.str();
    else
      os << "env none\n";
    os << "obs " << w.last_obs.size();
    for (Eigen::Index i = 0; i < w.last_obs.size(); ++i)
      os << " " << fmt_hex(w.last_obs[i]);
    os << "\n";
  }
}

void RolloutPool::load_state(std::istream& is) {
  std::string tok;
  int w_count = 0;
  is >> tok >> w_count >> total_env_steps_;
  if (tok != "rollout_pool" || w_count != workers())
    throw ContractError("RolloutPool::load_state: worker count mismatch");
  for (RolloutWorker& w : workers_) {
    is >> tok;
    if (tok != "worker") throw ContractError("RolloutPool::load_state: bad stream");
    w.rng.load(is);
    int needs_reset = 0;
    is >> tok >> tok;  // "episode" value
    w.episode_return = parse_double(tok);
    is >> w.episode_len >> needs_reset;
    w.needs_reset = needs_reset != 0;
    is >> tok;
    if (tok != "env") throw ContractError("RolloutPool::load_state: bad stream");
    is >> tok;
    if (tok != "ok")
      throw ContractError(
          "RolloutPool::load_state: checkpoint carries no environment snapshot "
          "(remote environments are not resumable)");
    if (!w.env->load_state(is))
      throw ContractError("RolloutPool::load_state: env does not support snapshots");
    Eigen::Index n = 0;
    is >> tok >> n;
    if (tok != "obs") throw ContractError("RolloutPool::load_state: bad obs");
    w.last_obs.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      is >> tok;
      w.last_obs[i] = parse_double(tok);
    }
  }
}

}  // namespace polgrad
