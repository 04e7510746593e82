#include "polgrad/ppo.hpp"

#include <cmath>
#include <numeric>

namespace polgrad {

namespace {

double gaussian_logp_row(const RowVec& mean, const RowVec& log_std,
                         const RowVec& action) {
  double lp = -0.5 * kLn2Pi * static_cast<double>(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    lp -= 0.5 * z * z + log_std[i];
  }
  return lp;
}

}  // namespace

Vec probability_ratio(const PolicyValueNet& net, const TrajectoryBatch& batch) {
  const Mat mean = net.policy_mean_batch(batch.states);
  const RowVec ls = net.clamped_log_std();
  Vec r(batch.T());
  for (int t = 0; t < batch.T(); ++t)
    r[t] = std::exp(gaussian_logp_row(mean.row(t), ls, batch.actions.row(t)) -
                    batch.log_probs[t]);
  return r;
}

double clipped_loss(const Vec& ratio, const Vec& advantages, double eps) {
  if (!(eps > 0.0)) throw ConfigError("clipped_loss: eps must be positive");
  if (ratio.size() != advantages.size())
    throw ContractError("clipped_loss: length mismatch");
  double acc = 0.0;
  for (Eigen::Index t = 0; t < ratio.size(); ++t) {
    const double unclipped = ratio[t] * advantages[t];
    const double clipped = std::clamp(ratio[t], 1.0 - eps, 1.0 + eps) * advantages[t];
    acc += std::min(unclipped, clipped);
  }
  return acc / static_cast<double>(ratio.size());
}

Tensor clipped_loss_graph(const Tensor& ratio, const Vec& advantages, double eps) {
  if (!(eps > 0.0)) throw ConfigError("clipped_loss_graph: eps must be positive");
  Tape& tape = *ratio.tape();
  Tensor adv = tape.constant(Mat(advantages));
  Tensor unclipped = ratio * adv;
  Tensor clipped = clip(ratio, 1.0 - eps, 1.0 + eps) * adv;
  return mean(min(unclipped, clipped));
}

double clip_fraction_of(const Vec& ratio, double eps) {
  Eigen::Index n = 0;
  for (Eigen::Index t = 0; t < ratio.size(); ++t)
    if (std::abs(ratio[t] - 1.0) > eps) n += 1;
  return static_cast<double>(n) / static_cast<double>(ratio.size());
}

PpoTrainer::PpoTrainer(const TrainConfig& cfg, PolicyValueNet& net)
    : cfg_(cfg), opt_(cfg.ppo_lr) {
  (void)net;
}

PpoReport PpoTrainer::update(PolicyValueNet& net, const TrajectoryBatch& batch,
                             Rng& rng) {
  PpoReport rep;
  const int T = batch.T();
  const int mb = std::min(cfg_.minibatch, T);
  if (T % mb != 0)
    throw ConfigError("ppo: batch size " + std::to_string(T) +
                      " not divisible by minibatch " + std::to_string(mb));
  {
    const Vec v = net.value_batch(batch.states);
    rep.value_loss_before = (v - batch.returns).squaredNorm() / T;
  }

  std::vector<int> idx(static_cast<std::size_t>(T));
  std::iota(idx.begin(), idx.end(), 0);
  auto params = net.param_mats();

  for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
    shuffle(idx, rng);
    for (int start = 0; start < T; start += mb) {
      Mat mb_states(mb, net.obs_dim());
      Mat mb_actions(mb, net.act_dim());
      Vec mb_adv(mb), mb_logp(mb), mb_ret(mb);
      for (int i = 0; i < mb; ++i) {
        const int row = idx[static_cast<std::size_t>(start + i)];
        mb_states.row(i) = batch.states.row(row);
        mb_actions.row(i) = batch.actions.row(row);
        mb_adv[i] = batch.advantages[row];
        mb_logp[i] = batch.log_probs[row];
        mb_ret[i] = batch.returns[row];
      }

      Tape tape;
      auto bound = net.bind(tape);
      Tensor mean_t = bound.policy_mean(mb_states);
      Tensor lp = log_prob_rows(mean_t, bound.log_std(), mb_actions);
      Tensor ratio = exp(lp - tape.constant(Mat(mb_logp)));
      Tensor lclip = clipped_loss_graph(ratio, mb_adv, cfg_.clip_eps);
      Tensor vout = bound.value_out(mb_states);
      Tensor vloss = mean(square(vout - tape.constant(Mat(mb_ret))));
      // ascend L^clip (+ entropy bonus), descend the value error
      Tensor total = -1.0 * lclip + cfg_.vf_coef * vloss;
      if (cfg_.ent_coef != 0.0)
        total = total + (-cfg_.ent_coef) * entropy_scalar(bound.log_std());

      Gradients grads = backward(total);
      std::vector<Mat> gs;
      gs.reserve(params.size());
      for (const Tensor& leaf : bound.all_leaves()) gs.push_back(grads.at(leaf).value());
      if (cfg_.optimizer == "sgd")
        sgd_step(params, gs, cfg_.ppo_lr);
      else
        opt_.step(params, gs);
    }
    rep.epochs_run = epoch + 1;
    if (cfg_.kl_early_stop) {
      // optional extension, off by default
      Mat mean_now = net.policy_mean_batch(batch.states);
      const RowVec ls = net.clamped_log_std();
      double kl_acc = 0.0;
      for (int t = 0; t < T; ++t) {
        DiagonalGaussian oldd, newd;
        oldd.mean = batch.old_mean.row(t);
        oldd.log_std = batch.old_log_std.row(t);
        newd.mean = mean_now.row(t);
        newd.log_std = ls;
        kl_acc += kl_divergence(oldd, newd);
      }
      if (kl_acc / T > cfg_.target_kl) break;
    }
  }

  const Vec ratio = probability_ratio(net, batch);
  rep.clip_loss = clipped_loss(ratio, batch.advantages, cfg_.clip_eps);
  rep.ratio_mean = ratio.mean();
  rep.ratio_max = ratio.maxCoeff();
  rep.clip_fraction = clip_fraction_of(ratio, cfg_.clip_eps);
  {
    Mat mean_now = net.policy_mean_batch(batch.states);
    const RowVec ls = net.clamped_log_std();
    double kl_acc = 0.0;
    for (int t = 0; t < T; ++t) {
      DiagonalGaussian oldd, newd;
      oldd.mean = batch.old_mean.row(t);
      oldd.log_std = batch.old_log_std.row(t);
      newd.mean = mean_now.row(t);
      newd.log_std = ls;
      kl_acc += kl_divergence(oldd, newd);
    }
    rep.kl = kl_acc / T;
    const Vec v = net.value_batch(batch.states);
    rep.value_loss_after = (v - batch.returns).squaredNorm() / T;
  }
  return rep;
}

void PpoTrainer::save_state(std::ostream& os) const { opt_.save(os); }

void PpoTrainer::load_state(std::istream& is) { opt_.load(is); }

}  // namespace polgrad
