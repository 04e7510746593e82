#include "polgrad/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "polgrad/envlink.hpp"
#include "polgrad/reacher.hpp"

namespace polgrad {

namespace {

namespace fs = std::filesystem;

std::string csv_num(double v) { return fmt_g17(v); }

class TrpoAlgo final : public AlgoTrainer {
 public:
  explicit TrpoAlgo(const TrainConfig& cfg) : impl_(cfg) {}
  UpdateStats update(PolicyValueNet& net, TrajectoryBatch& batch, Rng&) override {
    TrpoReport rep = impl_.update(net, batch);
    UpdateStats s;
    s.kl = rep.kl;
    s.cg_residual = rep.cg_residual;
    s.backtracks = rep.accepted ? rep.backtracks : -1;
    s.value_loss = rep.value_loss_after;
    s.surrogate_improve = rep.surrogate_after - rep.surrogate_before;
    return s;
  }

 private:
  TrpoTrainer impl_;
};

class PpoAlgo final : public AlgoTrainer {
 public:
  PpoAlgo(const TrainConfig& cfg, PolicyValueNet& net) : impl_(cfg, net) {}
  UpdateStats update(PolicyValueNet& net, TrajectoryBatch& batch, Rng& rng) override {
    PpoReport rep = impl_.update(net, batch, rng);
    UpdateStats s;
    s.kl = rep.kl;
    s.clip_frac = rep.clip_fraction;
    s.value_loss = rep.value_loss_after;
    s.surrogate_improve = rep.clip_loss;
    return s;
  }
  void save_state(std::ostream& os) const override { impl_.save_state(os); }
  void load_state(std::istream& is) override { impl_.load_state(is); }

 private:
  PpoTrainer impl_;
};

class AcktrAlgo final : public AlgoTrainer {
 public:
  AcktrAlgo(const TrainConfig& cfg, PolicyValueNet& net) : impl_(cfg, net) {}
  UpdateStats update(PolicyValueNet& net, TrajectoryBatch& batch, Rng& rng) override {
    AcktrReport rep = impl_.update(net, batch, rng);
    UpdateStats s;
    s.kl = rep.kl;
    s.eta = rep.eta_actor;
    s.value_loss = rep.value_loss_after;
    s.surrogate_improve = rep.actor_objective;
    return s;
  }
  void save_state(std::ostream& os) const override { impl_.save_state(os); }
  void load_state(std::istream& is) override { impl_.load_state(is); }

 private:
  AcktrTrainer impl_;
};

}  // namespace

std::unique_ptr<AlgoTrainer> AlgoTrainer::make(const TrainConfig& cfg,
                                               PolicyValueNet& net) {
  if (cfg.algo == "trpo") return std::make_unique<TrpoAlgo>(cfg);
  if (cfg.algo == "ppo") return std::make_unique<PpoAlgo>(cfg, net);
  if (cfg.algo == "acktr") return std::make_unique<AcktrAlgo>(cfg, net);
  throw ConfigError("unknown algorithm '" + cfg.algo + "'");
}

// --- logger ---

RunLogger::RunLogger(const std::string& dir, bool append) {
  const auto mode = append ? std::ios::app : std::ios::trunc;
  progress_.open(dir + "/progress.csv", mode);
  episodes_.open(dir + "/episodes.csv", mode);
  timing_.open(dir + "/timing.csv", mode);
  if (!progress_ || !episodes_ || !timing_)
    throw ConfigError("run dir not writable: " + dir);
  if (!append) {
    progress_ << "schema,update,total_steps,episodes,ep_reward_mean,roll_mean,"
                 "roll_std,kl,clip_frac,cg_residual,backtracks,eta,value_loss,"
                 "surrogate_improve\n";
    episodes_ << "schema,episode,end_step,reward,length\n";
    timing_ << "schema,update,wall_clock_s\n";
    progress_.flush();
    episodes_.flush();
    timing_.flush();
  }
}

void RunLogger::log_episodes(const std::vector<CompletedEpisode>& episodes) {
  for (const CompletedEpisode& ep : episodes) {
    episode_counter_ += 1;
    episodes_ << 1 << "," << episode_counter_ << "," << ep.end_step << ","
              << csv_num(ep.total_reward) << "," << ep.length << "\n";
    window_.push_back(ep.total_reward);
    if (window_.size() > static_cast<std::size_t>(kRollingWindow)) window_.pop_front();
    episodes_since_update_ += 1;
    reward_since_update_ += ep.total_reward;
  }
  episodes_.flush();
}

double RunLogger::rolling_mean() const {
  if (window_.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double v : window_) acc += v;
  return acc / static_cast<double>(window_.size());
}

double RunLogger::rolling_std() const {
  if (window_.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double mean = rolling_mean();
  double var = 0.0;
  for (double v : window_) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(window_.size()));
}

double RunLogger::mean_reward_since_update() const {
  if (episodes_since_update_ == 0) return std::numeric_limits<double>::quiet_NaN();
  return reward_since_update_ / episodes_since_update_;
}

void RunLogger::log_update(long long update, long long total_steps,
                           const UpdateStats& stats) {
  progress_ << 1 << "," << update << "," << total_steps << ","
            << episodes_since_update_ << "," << csv_num(mean_reward_since_update())
            << "," << csv_num(rolling_mean()) << "," << csv_num(rolling_std()) << ","
            << csv_num(stats.kl) << "," << csv_num(stats.clip_frac) << ","
            << csv_num(stats.cg_residual) << "," << stats.backtracks << ","
            << csv_num(stats.eta) << "," << csv_num(stats.value_loss) << ","
            << csv_num(stats.surrogate_improve) << "\n";
  progress_.flush();
  episodes_since_update_ = 0;
  reward_since_update_ = 0.0;
}

void RunLogger::log_timing(long long update, double seconds) {
  timing_ << 1 << "," << update << "," << csv_num(seconds) << "\n";
  timing_.flush();
}

void RunLogger::save_state(std::ostream& os) const {
  os << "logger " << episode_counter_ << " " << episodes_since_update_ << " "
     << fmt_hex(reward_since_update_) << " " << window_.size();
  for (double v : window_) os << " " << fmt_hex(v);
  os << "\n";
}

void RunLogger::load_state(std::istream& is) {
  std::string tok;
  std::size_t n = 0;
  is >> tok >> episode_counter_ >> episodes_since_update_;
  if (tok != "logger") throw ContractError("RunLogger::load_state: bad header");
  is >> tok;
  reward_since_update_ = parse_double(tok);
  is >> n;
  window_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    is >> tok;
    window_.push_back(parse_double(tok));
  }
}

// --- evaluation ---

EvalSummary evaluate(const PolicyValueNet& net, Env& env, int episodes,
                     bool deterministic, Rng& rng) {
  EvalSummary s;
  s.episodes = episodes;
  std::vector<double> rewards;
  double dist_acc = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Eigen::VectorXd obs = env.reset();
    double total = 0.0;
    bool done = false;
    while (!done) {
      DiagonalGaussian d = net.policy(obs.transpose());
      const RowVec action = deterministic ? d.mean : sample(d, rng);
      Transition tr = env.step(action.transpose());
      total += tr.reward;
      obs = tr.observation;
      done = tr.done;
    }
    rewards.push_back(total);
    dist_acc += env.distance_to_target();
  }
  double mean = 0.0;
  for (double v : rewards) mean += v;
  mean /= episodes;
  double var = 0.0;
  for (double v : rewards) var += (v - mean) * (v - mean);
  s.mean_reward = mean;
  s.std_reward = std::sqrt(var / episodes);
  s.mean_final_distance = dist_acc / episodes;
  return s;
}

// --- environment factory ---

EnvFactory make_env_factory(const TrainConfig& cfg) {
  if (!cfg.remote.empty()) {
    const auto ep = envlink::parse_endpoint(cfg.remote);
    return [ep] { return std::make_unique<envlink::RemoteEnv>(ep); };
  }
  ReacherOptions opts;
  opts.max_episode_steps = cfg.max_episode_steps;
  opts.randomize_target = cfg.randomize_target;
  if (!cfg.arm_config.empty()) opts.model_override = load_arm_model_file(cfg.arm_config);
  const std::string name = cfg.env;
  return [name, opts] { return make_env(name, opts); };
}

// --- checkpointing ---

namespace {

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const PolicyValueNet& net, const AlgoTrainer& trainer,
                     const std::string& pool_state, const Rng& harness_rng,
                     const RunLogger& logger, long long update, long long steps) {
  std::ofstream f(path + ".tmp");
  if (!f) throw ConfigError("cannot write checkpoint " + path);
  f << "polgrad-checkpoint 1\n";
  f << "[config]\n";
  cfg.write(f);
  f << "[net]\n";
  net.save(f);
  f << "[trainer]\n";
  f << "progress " << update << " " << steps << "\n";
  f << "harness_rng ";
  harness_rng.save(f);
  f << "\n";
  logger.save_state(f);
  f << "[algo]\n";
  trainer.save_state(f);
  f << "\n[pool]\n";
  f << pool_state;
  f << "[end]\n";
  f.close();
  fs::rename(path + ".tmp", path);
}

struct LoadedCheckpoint {
  TrainConfig config;
  PolicyValueNet net;
  long long update = 0;
  long long steps = 0;
  Rng harness_rng{0};
  std::string logger_line;
  std::string algo_blob;
  std::string pool_blob;
};

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open checkpoint " + path);
  std::string line;
  std::getline(f, line);
  if (line != "polgrad-checkpoint 1")
    throw ConfigError("unrecognized checkpoint format in " + path);
  std::getline(f, line);
  if (line != "[config]") throw ConfigError("checkpoint: expected [config]");
  std::stringstream cfg_text;
  while (std::getline(f, line) && line != "[net]") cfg_text << line << "\n";
  LoadedCheckpoint out{TrainConfig{}, PolicyValueNet::load(f)};
  out.config.load_stream(cfg_text);
  std::string tok;
  f >> tok;  // [trainer]
  if (tok != "[trainer]") throw ConfigError("checkpoint: expected [trainer]");
  f >> tok >> out.update >> out.steps;
  f >> tok;
  out.harness_rng.load(f);
  std::getline(f, line);  // rest of rng line
  std::getline(f, line);  // logger line
  out.logger_line = line + "\n";
  std::getline(f, line);  // [algo]
  if (line != "[algo]") throw ConfigError("checkpoint: expected [algo]");
  std::stringstream algo_text;
  while (std::getline(f, line) && line != "[pool]") algo_text << line << "\n";
  out.algo_blob = algo_text.str();
  std::stringstream pool_text;
  while (std::getline(f, line) && line != "[end]") pool_text << line << "\n";
  out.pool_blob = pool_text.str();
  return out;
}

}  // namespace

CheckpointHead load_checkpoint_head(const std::string& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  return CheckpointHead{std::move(ck.config), std::move(ck.net)};
}

// --- training ---

namespace {

TrainResult run_training(TrainConfig cfg, PolicyValueNet net, RolloutPool& pool,
                         std::unique_ptr<AlgoTrainer> trainer, Rng harness_rng,
                         RunLogger& logger, long long update, long long steps0,
                         const UpdateHook& hook) {
  const std::string dir = cfg.out_dir;
  TrainResult result;
  result.run_dir = dir;

  auto checkpoint_path = [&](long long u) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.txt", u);
    return dir + "/" + buf;
  };
  auto snapshot_pool = [&]() {
    std::stringstream ss;
    pool.save_state(ss);
    return ss.str();
  };

  // initial checkpoint: a total_steps=0 run still leaves a loadable artifact
  save_checkpoint(checkpoint_path(update), cfg, net, *trainer, snapshot_pool(),
                  harness_rng, logger, update, pool.total_env_steps());

  std::string last_good_pool = snapshot_pool();
  while (pool.total_env_steps() < cfg.total_steps) {
    const auto t0 = std::chrono::steady_clock::now();
    last_good_pool = snapshot_pool();
    TrajectoryBatch batch;
    try {
      batch = pool.collect(net, cfg.horizon);
    } catch (const EnvFault& e) {
      // abort with a resumable state from the last update boundary
      save_checkpoint(dir + "/checkpoint_abort.txt", cfg, net, *trainer,
                      last_good_pool, harness_rng, logger, update, steps0);
      throw EnvFault(std::string(e.what()) + " (state saved to " + dir +
                     "/checkpoint_abort.txt)");
    }
    compute_returns_and_advantages(batch, cfg.gamma, cfg.gae_lambda);
    if (cfg.normalize_advantages_resolved()) normalize_advantages(batch.advantages);

    UpdateStats stats = trainer->update(net, batch, harness_rng);
    update += 1;
    logger.log_episodes(batch.episodes);
    logger.log_update(update, pool.total_env_steps(), stats);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    logger.log_timing(update, dt.count());

    if (cfg.checkpoint_every > 0 && update % cfg.checkpoint_every == 0)
      save_checkpoint(checkpoint_path(update), cfg, net, *trainer, snapshot_pool(),
                      harness_rng, logger, update, pool.total_env_steps());
    if (hook && !hook(update, pool.total_env_steps(), net)) break;
  }

  const std::string final_path = dir + "/checkpoint_final.txt";
  save_checkpoint(final_path, cfg, net, *trainer, snapshot_pool(), harness_rng,
                  logger, update, pool.total_env_steps());
  result.total_steps = pool.total_env_steps();
  result.updates = update;
  result.final_checkpoint = final_path;
  (void)steps0;
  return result;
}

}  // namespace

TrainResult train(TrainConfig cfg, const UpdateHook& hook) {
  cfg.validate();
  if (cfg.out_dir.empty())
    cfg.out_dir = "runs/" + cfg.algo + "_" + cfg.env + "_seed" +
                  std::to_string(cfg.seed);
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/config.txt");
    cfg.write(f);
  }

  EnvFactory factory = make_env_factory(cfg);
  NetSpec nspec;
  {
    auto probe = factory();
    nspec.obs_dim = probe->spec().obs_dim;
    nspec.act_dim = probe->spec().act_dim;
  }
  nspec.hidden = cfg.hidden;
  nspec.sharing = cfg.shared_trunk ? Sharing::kSharedTrunk : Sharing::kDisjoint;
  nspec.log_std_init = cfg.log_std_init;

  Rng init_rng = Rng::derive(cfg.seed, 0xA11);
  PolicyValueNet net = PolicyValueNet::create(nspec, init_rng);
  RolloutPool pool(factory, cfg.workers, cfg.seed);
  auto trainer = AlgoTrainer::make(cfg, net);
  Rng harness_rng = Rng::derive(cfg.seed, 0xB22);
  RunLogger logger(cfg.out_dir, /*append=*/false);

  return run_training(std::move(cfg), std::move(net), pool, std::move(trainer),
                      harness_rng, logger, 0, 0, hook);
}

TrainResult resume_training(const std::string& checkpoint_path,
                            const std::string& out_dir,
                            long long total_steps_override, const UpdateHook& hook) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  TrainConfig cfg = ck.config;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.out_dir.empty())
    throw ConfigError("resume: no output directory (use --out)");
  if (total_steps_override >= 0) cfg.total_steps = total_steps_override;
  cfg.validate();
  if (!cfg.remote.empty())
    throw ConfigError(
        "resume: remote environments cannot be snapshotted; resume requires a "
        "local environment");
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/config.txt");
    cfg.write(f);
  }

  EnvFactory factory = make_env_factory(cfg);
  RolloutPool pool(factory, cfg.workers, cfg.seed);
  {
    std::stringstream ss(ck.pool_blob);
    pool.load_state(ss);
  }
  auto trainer = AlgoTrainer::make(cfg, ck.net);
  {
    std::stringstream ss(ck.algo_blob);
    std::string probe;
    if (ss >> probe) {  // non-empty algo state
      std::stringstream again(ck.algo_blob);
      trainer->load_state(again);
    }
  }
  RunLogger logger(cfg.out_dir, /*append=*/false);
  {
    std::stringstream ss(ck.logger_line);
    logger.load_state(ss);
  }
  return run_training(std::move(cfg), std::move(ck.net), pool, std::move(trainer),
                      ck.harness_rng, logger, ck.update, ck.steps, hook);
}

}  // namespace polgrad
