#include "polgrad/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace polgrad {

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("config: boolean expected for " + key + ", got '" + v + "'");
}

long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: integer expected for " + key + ", got '" + v + "'");
  }
}

double parse_real(const std::string& v, const std::string& key) {
  try {
    return parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError("config: number expected for " + key + ", got '" + v + "'");
  }
}

}  // namespace

void TrainConfig::apply_paper_preset() {
  max_episode_steps = 2048;
  horizon = 2048;
  total_steps = 1000000;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "algo") algo = value;
  else if (key == "env") env = value;
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "total_steps") total_steps = parse_int(value, key);
  else if (key == "horizon") horizon = static_cast<int>(parse_int(value, key));
  else if (key == "workers") workers = static_cast<int>(parse_int(value, key));
  else if (key == "out_dir") out_dir = value;
  else if (key == "remote") remote = value;
  else if (key == "arm_config") arm_config = value;
  else if (key == "checkpoint_every") checkpoint_every = static_cast<int>(parse_int(value, key));
  else if (key == "max_episode_steps") max_episode_steps = static_cast<int>(parse_int(value, key));
  else if (key == "randomize_target") randomize_target = parse_bool(value, key);
  else if (key == "gamma") gamma = parse_real(value, key);
  else if (key == "gae_lambda") gae_lambda = parse_real(value, key);
  else if (key == "normalize_adv") normalize_adv = parse_bool(value, key) ? 1 : 0;
  else if (key == "hidden") {
    hidden.clear();
    std::istringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) hidden.push_back(static_cast<int>(parse_int(tok, key)));
  }
  else if (key == "log_std_init") log_std_init = parse_real(value, key);
  else if (key == "shared_trunk") shared_trunk = parse_bool(value, key);
  else if (key == "trpo_delta") trpo_delta = parse_real(value, key);
  else if (key == "cg_damping") cg_damping = parse_real(value, key);
  else if (key == "cg_tol") cg_tol = parse_real(value, key);
  else if (key == "cg_iters") cg_iters = static_cast<int>(parse_int(value, key));
  else if (key == "backtrack_coef") backtrack_coef = parse_real(value, key);
  else if (key == "max_backtracks") max_backtracks = static_cast<int>(parse_int(value, key));
  else if (key == "vf_epochs") vf_epochs = static_cast<int>(parse_int(value, key));
  else if (key == "vf_lr") vf_lr = parse_real(value, key);
  else if (key == "clip_eps") clip_eps = parse_real(value, key);
  else if (key == "ppo_epochs") ppo_epochs = static_cast<int>(parse_int(value, key));
  else if (key == "minibatch") minibatch = static_cast<int>(parse_int(value, key));
  else if (key == "ppo_lr") ppo_lr = parse_real(value, key);
  else if (key == "vf_coef") vf_coef = parse_real(value, key);
  else if (key == "ent_coef") ent_coef = parse_real(value, key);
  else if (key == "optimizer") optimizer = value;
  else if (key == "kl_early_stop") kl_early_stop = parse_bool(value, key);
  else if (key == "target_kl") target_kl = parse_real(value, key);
  else if (key == "kfac_delta") kfac_delta = parse_real(value, key);
  else if (key == "kfac_eta_max") kfac_eta_max = parse_real(value, key);
  else if (key == "kfac_damping") kfac_damping = parse_real(value, key);
  else if (key == "kfac_decay") kfac_decay = parse_real(value, key);
  else if (key == "kfac_invert_every") kfac_invert_every = static_cast<int>(parse_int(value, key));
  else if (key == "kfac_empirical_fisher") kfac_empirical_fisher = parse_bool(value, key);
  else if (key == "kfac_critic_mode") kfac_critic_mode = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (algo != "trpo" && algo != "ppo" && algo != "acktr")
    fail("algo must be trpo|ppo|acktr, got '" + algo + "'");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (horizon <= 0) fail("horizon must be positive");
  if (workers <= 0) fail("workers must be positive");
  if (horizon % workers != 0) fail("horizon must be divisible by workers");
  if (max_episode_steps <= 0) fail("max_episode_steps must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must be in [0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in [0,1]");
  if (hidden.empty()) fail("hidden must name at least one layer");
  for (int h : hidden)
    if (h <= 0) fail("hidden sizes must be positive");
  if (!(trpo_delta > 0.0)) fail("trpo_delta must be positive");
  if (!(cg_damping >= 0.0)) fail("cg_damping must be nonnegative");
  if (cg_iters <= 0) fail("cg_iters must be positive");
  if (!(backtrack_coef > 0.0 && backtrack_coef < 1.0))
    fail("backtrack_coef must be in (0,1)");
  if (max_backtracks < 0) fail("max_backtracks must be >= 0");
  if (vf_epochs <= 0) fail("vf_epochs must be positive");
  if (!(vf_lr >= 0.0)) fail("vf_lr must be nonnegative");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (ppo_epochs <= 0) fail("ppo_epochs must be positive");
  if (minibatch <= 0) fail("minibatch must be positive");
  if (horizon % minibatch != 0 && algo == "ppo")
    fail("horizon must be divisible by minibatch");
  if (!(ppo_lr >= 0.0)) fail("ppo_lr must be nonnegative");
  if (optimizer != "adam" && optimizer != "sgd")
    fail("optimizer must be adam|sgd, got '" + optimizer + "'");
  if (!(kfac_delta > 0.0)) fail("kfac_delta must be positive");
  if (!(kfac_eta_max > 0.0)) fail("kfac_eta_max must be positive");
  if (!(kfac_damping > 0.0)) fail("kfac_damping must be positive");
  if (!(kfac_decay >= 0.0 && kfac_decay < 1.0)) fail("kfac_decay must be in [0,1)");
  if (kfac_invert_every <= 0) fail("kfac_invert_every must be positive");
  if (kfac_critic_mode != "gauss-newton" && kfac_critic_mode != "sampled")
    fail("kfac_critic_mode must be gauss-newton|sampled");
}

void TrainConfig::load_stream(std::istream& is) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno += 1;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string s) {
      const auto sb = s.find_first_not_of(" \t");
      if (sb == std::string::npos) return std::string();
      const auto se = s.find_last_not_of(" \t");
      return s.substr(sb, se - sb + 1);
    };
    set(strip(key), strip(value));
  }
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  TrainConfig cfg;
  cfg.load_stream(f);
  return cfg;
}

void TrainConfig::write(std::ostream& os) const {
  os << "algo=" << algo << "\n";
  os << "env=" << env << "\n";
  os << "seed=" << seed << "\n";
  os << "total_steps=" << total_steps << "\n";
  os << "horizon=" << horizon << "\n";
  os << "workers=" << workers << "\n";
  os << "out_dir=" << out_dir << "\n";
  os << "remote=" << remote << "\n";
  os << "arm_config=" << arm_config << "\n";
  os << "checkpoint_every=" << checkpoint_every << "\n";
  os << "max_episode_steps=" << max_episode_steps << "\n";
  os << "randomize_target=" << (randomize_target ? 1 : 0) << "\n";
  os << "gamma=" << fmt_g17(gamma) << "\n";
  os << "gae_lambda=" << fmt_g17(gae_lambda) << "\n";
  os << "normalize_adv=" << (normalize_advantages_resolved() ? 1 : 0) << "\n";
  os << "hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i)
    os << (i ? "," : "") << hidden[i];
  os << "\n";
  os << "log_std_init=" << fmt_g17(log_std_init) << "\n";
  os << "shared_trunk=" << (shared_trunk ? 1 : 0) << "\n";
  os << "trpo_delta=" << fmt_g17(trpo_delta) << "\n";
  os << "cg_damping=" << fmt_g17(cg_damping) << "\n";
  os << "cg_tol=" << fmt_g17(cg_tol) << "\n";
  os << "cg_iters=" << cg_iters << "\n";
  os << "backtrack_coef=" << fmt_g17(backtrack_coef) << "\n";
  os << "max_backtracks=" << max_backtracks << "\n";
  os << "vf_epochs=" << vf_epochs << "\n";
  os << "vf_lr=" << fmt_g17(vf_lr) << "\n";
  os << "clip_eps=" << fmt_g17(clip_eps) << "\n";
  os << "ppo_epochs=" << ppo_epochs << "\n";
  os << "minibatch=" << minibatch << "\n";
  os << "ppo_lr=" << fmt_g17(ppo_lr) << "\n";
  os << "vf_coef=" << fmt_g17(vf_coef) << "\n";
  os << "ent_coef=" << fmt_g17(ent_coef) << "\n";
  os << "optimizer=" << optimizer << "\n";
  os << "kl_early_stop=" << (kl_early_stop ? 1 : 0) << "\n";
  os << "target_kl=" << fmt_g17(target_kl) << "\n";
  os << "kfac_delta=" << fmt_g17(kfac_delta) << "\n";
  os << "kfac_eta_max=" << fmt_g17(kfac_eta_max) << "\n";
  os << "kfac_damping=" << fmt_g17(kfac_damping) << "\n";
  os << "kfac_decay=" << fmt_g17(kfac_decay) << "\n";
  os << "kfac_invert_every=" << kfac_invert_every << "\n";
  os << "kfac_empirical_fisher=" << (kfac_empirical_fisher ? 1 : 0) << "\n";
  os << "kfac_critic_mode=" << kfac_critic_mode << "\n";
}

}  // namespace polgrad
