#include "polgrad/trpo.hpp"

#include <cmath>

#include "polgrad/optim.hpp"

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

Vec flatten_leaf_grads(Gradients& grads, const std::vector<Tensor>& leaves) {
  Eigen::Index total = 0;
  for (const Tensor& l : leaves) total += l.size();
  Vec out(total);
  Eigen::Index at = 0;
  for (const Tensor& l : leaves) {
    const Mat& g = grads.at(l).value();
    out.segment(at, g.size()) = Eigen::Map<const Vec>(g.data(), g.size());
    at += g.size();
  }
  return out;
}

}  // namespace

double surrogate_value(const PolicyValueNet& net, const TrajectoryBatch& batch) {
  const Mat mean = net.policy_mean_batch(batch.states);
  const RowVec ls = net.clamped_log_std();
  double acc = 0.0;
  for (int t = 0; t < batch.T(); ++t) {
    const double lp = gaussian_logp_row(mean.row(t), ls, batch.actions.row(t));
    acc += std::exp(lp - batch.log_probs[t]) * batch.advantages[t];
  }
  return acc / batch.T();
}

double mean_kl_value(const PolicyValueNet& net, const TrajectoryBatch& batch) {
  const Mat mean = net.policy_mean_batch(batch.states);
  const RowVec ls = net.clamped_log_std();
  double acc = 0.0;
  for (int t = 0; t < batch.T(); ++t) {
    DiagonalGaussian oldd, newd;
    oldd.mean = batch.old_mean.row(t);
    oldd.log_std = batch.old_log_std.row(t);
    newd.mean = mean.row(t);
    newd.log_std = ls;
    acc += kl_divergence(oldd, newd);
  }
  return acc / batch.T();
}

Tensor surrogate_graph(PolicyValueNet::Bound& bound, const TrajectoryBatch& batch) {
  Tape& tape = *bound.policy_leaves().front().tape();
  Tensor mean_t = bound.policy_mean(batch.states);
  Tensor lp = log_prob_rows(mean_t, bound.log_std(), batch.actions);
  Tensor lp_old = tape.constant(Mat(batch.log_probs));
  Tensor ratio = exp(lp - lp_old);
  Tensor adv = tape.constant(Mat(batch.advantages));
  return mean(ratio * adv);
}

Vec policy_gradient_estimate(const PolicyValueNet& net, const TrajectoryBatch& batch) {
  Tape tape;
  auto bound = net.bind(tape);
  Tensor loss = surrogate_graph(bound, batch);
  Gradients grads = backward(loss);
  return flatten_leaf_grads(grads, bound.policy_leaves());
}

MatVec make_kl_hvp(const PolicyValueNet& net, const TrajectoryBatch& batch,
                   double damping) {
  // The old side is frozen from the batch; a fresh tape per call keeps memory
  // flat across CG iterations.
  return [&net, &batch, damping](const Vec& v) -> Vec {
    Tape tape;
    auto bound = net.bind(tape);
    Tensor mean_t = bound.policy_mean(batch.states);
    Tensor kl =
        mean(kl_rows(batch.old_mean, batch.old_log_std.row(0), mean_t,
                     bound.log_std()));
    Gradients grads = backward(kl);

    const auto& leaves = bound.policy_leaves();
    Tensor gv;
    Eigen::Index at = 0;
    for (const Tensor& leaf : leaves) {
      Mat vi = Eigen::Map<const Mat>(v.data() + at, leaf.rows(), leaf.cols());
      Tensor term = dot(grads.at(leaf), tape.constant(std::move(vi)));
      gv = gv.defined() ? gv + term : term;
      at += leaf.size();
    }
    Gradients second = backward(gv);
    Vec hv = flatten_leaf_grads(second, leaves);
    return hv + damping * v;
  };
}

LineSearchResult backtracking_line_search(
    const Vec& theta0, const Vec& full_step, double surrogate0, double delta,
    double alpha, int max_backtracks,
    const std::function<double(const Vec&)>& surrogate_fn,
    const std::function<double(const Vec&)>& kl_fn) {
  LineSearchResult res;
  res.theta = theta0;
  double scale = 1.0;
  for (int j = 0; j <= max_backtracks; ++j, scale *= alpha) {
    Vec theta = theta0 + scale * full_step;
    const double surr = surrogate_fn(theta);
    const double kl = kl_fn(theta);
    if (std::isfinite(surr) && std::isfinite(kl) && surr > surrogate0 &&
        kl <= delta) {
      res.theta = std::move(theta);
      res.accepted = true;
      res.backtracks = j;
      res.surrogate = surr;
      res.kl = kl;
      return res;
    }
  }
  res.accepted = false;
  res.backtracks = max_backtracks + 1;
  res.surrogate = surrogate0;
  res.kl = 0.0;
  return res;
}

std::pair<double, double> fit_value_function(PolicyValueNet& net,
                                             const TrajectoryBatch& batch, int epochs,
                                             double lr) {
  const Mat targets = Mat(batch.returns);
  auto mse = [&]() {
    const Vec v = net.value_batch(batch.states);
    return (v - batch.returns).squaredNorm() / batch.T();
  };
  const double before = mse();
  Adam opt(lr);
  auto vmats = net.value_param_mats();
  for (int e = 0; e < epochs; ++e) {
    Tape tape;
    auto bound = net.bind(tape);
    Tensor v = bound.value_out(batch.states);
    Tensor loss = mean(square(v - tape.constant(targets)));
    Gradients grads = backward(loss);
    std::vector<Mat> gs;
    for (const Tensor& leaf : bound.value_leaves()) gs.push_back(grads.at(leaf).value());
    opt.step(vmats, gs);
  }
  return {before, mse()};
}

TrpoReport TrpoTrainer::update(PolicyValueNet& net, const TrajectoryBatch& batch) {
  TrpoReport rep;
  rep.surrogate_before = surrogate_value(net, batch);

  Vec g = policy_gradient_estimate(net, batch);
  rep.grad_norm = g.norm();
  if (!(rep.grad_norm > 1e-12)) {
    // degenerate batch (e.g. all-zero advantages); only the critic moves
    auto [vb, va] = fit_value_function(net, batch, cfg_.vf_epochs, cfg_.vf_lr);
    rep.value_loss_before = vb;
    rep.value_loss_after = va;
    rep.surrogate_after = rep.surrogate_before;
    return rep;
  }

  MatVec avp = make_kl_hvp(net, batch, cfg_.cg_damping);
  CgResult cg = conjugate_gradient(avp, g, cfg_.cg_iters, cfg_.cg_tol);
  rep.cg_residual = cg.relative_residual;
  rep.cg_iterations = cg.iterations;

  const double shs = cg.x.dot(avp(cg.x));
  if (!(shs > 0.0)) {
    auto [vb, va] = fit_value_function(net, batch, cfg_.vf_epochs, cfg_.vf_lr);
    rep.value_loss_before = vb;
    rep.value_loss_after = va;
    rep.surrogate_after = rep.surrogate_before;
    return rep;
  }
  const double beta = std::sqrt(2.0 * cfg_.trpo_delta / shs);
  const Vec full_step = beta * cg.x;

  const Vec theta0 = net.flatten_policy();
  PolicyValueNet scratch = net;
  auto surrogate_fn = [&](const Vec& theta) {
    scratch.set_policy_from_flat(theta);
    return surrogate_value(scratch, batch);
  };
  auto kl_fn = [&](const Vec& theta) {
    scratch.set_policy_from_flat(theta);
    return mean_kl_value(scratch, batch);
  };
  LineSearchResult ls = backtracking_line_search(
      theta0, full_step, rep.surrogate_before, cfg_.trpo_delta, cfg_.backtrack_coef,
      cfg_.max_backtracks, surrogate_fn, kl_fn);
  rep.backtracks = ls.backtracks;
  rep.accepted = ls.accepted;
  if (ls.accepted) {
    net.set_policy_from_flat(ls.theta);
    rep.step_norm = (ls.theta - theta0).norm();
    rep.surrogate_after = ls.surrogate;
    rep.kl = ls.kl;
  } else {
    rep.surrogate_after = rep.surrogate_before;
    rep.kl = 0.0;
  }

  auto [vb, va] = fit_value_function(net, batch, cfg_.vf_epochs, cfg_.vf_lr);
  rep.value_loss_before = vb;
  rep.value_loss_after = va;
  return rep;
}

}  // namespace polgrad
