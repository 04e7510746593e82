#include "polgrad/acktr.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <istream>
#include <ostream>

namespace polgrad {

void KfacLayerState::init(int in_plus_bias, int out) {
  A = Mat::Zero(in_plus_bias, in_plus_bias);
  G = Mat::Zero(out, out);
  inv_valid = false;
  staleness = 0;
  updates = 0;
}

void KfacLayerState::accumulate(const Mat& a_rows, const Mat& g_rows, double decay) {
  if (a_rows.rows() != g_rows.rows())
    throw ContractError("KfacLayerState::accumulate: row count mismatch");
  if (a_rows.cols() != A.cols() || g_rows.cols() != G.cols())
    throw ContractError("KfacLayerState::accumulate: width mismatch");
  const double n = static_cast<double>(a_rows.rows());
  const Mat a_cov = (a_rows.transpose() * a_rows) / n;
  const Mat g_cov = (g_rows.transpose() * g_rows) / n;
  // First accumulate seeds the average outright so early updates are not
  // dragged toward the zero initialization.
  const double d = updates == 0 ? 0.0 : decay;
  A = d * A + (1.0 - d) * a_cov;
  G = d * G + (1.0 - d) * g_cov;
  // keep the factors exactly symmetric
  A = 0.5 * (A + A.transpose()).eval();
  G = 0.5 * (G + G.transpose()).eval();
  updates += 1;
  inv_valid = false;
}

std::pair<double, double> factored_damping_split(const Mat& A, const Mat& G,
                                                 double damping) {
  const double tr_a = A.trace() / static_cast<double>(A.rows());
  const double tr_g = G.trace() / static_cast<double>(G.rows());
  double pi = 1.0;
  if (tr_a > 0.0 && tr_g > 0.0) pi = std::sqrt(tr_a / tr_g);
  const double root = std::sqrt(damping);
  return {root * pi, root / pi};
}

void KfacLayerState::refresh(double damping) {
  auto [la, lg] = factored_damping_split(A, G, damping);
  lambda_a = la;
  lambda_g = lg;
  const Mat Ad = A + lambda_a * Mat::Identity(A.rows(), A.cols());
  const Mat Gd = G + lambda_g * Mat::Identity(G.rows(), G.cols());
  Eigen::LLT<Eigen::MatrixXd> llt_a(Ad);
  if (llt_a.info() != Eigen::Success)
    throw Error("kfac: damped input factor is not positive definite");
  Eigen::LLT<Eigen::MatrixXd> llt_g(Gd);
  if (llt_g.info() != Eigen::Success)
    throw Error("kfac: damped gradient factor is not positive definite");
  A_inv = llt_a.solve(Eigen::MatrixXd::Identity(Ad.rows(), Ad.cols()));
  G_inv = llt_g.solve(Eigen::MatrixXd::Identity(Gd.rows(), Gd.cols()));
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(Ad);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_g(Gd);
    cond_a = es_a.eigenvalues().maxCoeff() / es_a.eigenvalues().minCoeff();
    cond_g = es_g.eigenvalues().maxCoeff() / es_g.eigenvalues().minCoeff();
  }
  inv_valid = true;
  staleness = 0;
}

Mat kfac_step(const KfacLayerState& state, const Mat& grad) {
  if (!state.inv_valid)
    throw ContractError("kfac_step: inverse cache not refreshed");
  if (grad.rows() != state.A.rows() || grad.cols() != state.G.rows())
    throw ContractError("kfac_step: gradient shape mismatch");
  return state.A_inv * grad * state.G_inv;
}

double kfac_quadratic_form(const KfacLayerState& state, const Mat& delta) {
  const Mat Ad =
      state.A + state.lambda_a * Mat::Identity(state.A.rows(), state.A.cols());
  const Mat Gd =
      state.G + state.lambda_g * Mat::Identity(state.G.rows(), state.G.cols());
  return (delta.transpose() * Ad * delta * Gd).trace();
}

Vec nstep_returns(const Vec& rewards, const std::vector<std::uint8_t>& terminals,
                  double v_end, double gamma, int t_max) {
  const Eigen::Index T = rewards.size();
  if (static_cast<Eigen::Index>(terminals.size()) != T)
    throw ContractError("nstep_returns: length mismatch");
  if (T > t_max)
    throw ContractError("nstep_returns: segment longer than t_max");
  Vec out(T);
  double r = terminals.empty() || terminals.back() ? 0.0 : v_end;
  for (Eigen::Index i = T - 1; i >= 0; --i) {
    if (i + 1 < T && terminals[static_cast<std::size_t>(i)]) r = 0.0;
    r = rewards[i] + gamma * r;
    out[i] = r;
  }
  return out;
}

double trust_region_eta(double quad, double delta, double eta_max) {
  if (!(quad > 0.0)) return 0.0;
  return std::min(eta_max, std::sqrt(2.0 * delta / quad));
}

void KfacLayerState::save(std::ostream& os) const {
  auto dump = [&](const Mat& m) {
    os << m.rows() << " " << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << " " << fmt_hex(m(r, c));
    os << "\n";
  };
  os << "kfac_layer " << (inv_valid ? 1 : 0) << " " << staleness << " " << updates
     << " " << fmt_hex(lambda_a) << " " << fmt_hex(lambda_g) << " "
     << fmt_hex(cond_a) << " " << fmt_hex(cond_g) << "\n";
  dump(A);
  dump(G);
  if (inv_valid) {
    dump(A_inv);
    dump(G_inv);
  }
}

void KfacLayerState::load(std::istream& is) {
  auto slurp = [&](Mat& m) {
    Eigen::Index rows = 0, cols = 0;
    is >> rows >> cols;
    m.resize(rows, cols);
    std::string tok;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        is >> tok;
        m(r, c) = parse_double(tok);
      }
  };
  std::string tok;
  int valid = 0;
  is >> tok >> valid >> staleness >> updates;
  if (tok != "kfac_layer") throw ContractError("KfacLayerState::load: bad header");
  is >> tok;
  lambda_a = parse_double(tok);
  is >> tok;
  lambda_g = parse_double(tok);
  is >> tok;
  cond_a = parse_double(tok);
  is >> tok;
  cond_g = parse_double(tok);
  slurp(A);
  slurp(G);
  inv_valid = valid != 0;
  if (inv_valid) {
    slurp(A_inv);
    slurp(G_inv);
  }
}

// --- trainer ---

namespace {

Mat with_bias_column(const Mat& rows) {
  Mat out(rows.rows(), rows.cols() + 1);
  out.leftCols(rows.cols()) = rows;
  out.col(rows.cols()).setOnes();
  return out;
}

// Stacks the (W, b) gradients of one tap into the (in+1, out) layout.
Mat stacked_grad(Gradients& grads, const LayerTap& tap) {
  const Mat gw = grads.at(tap.W).value();
  const Mat gb = grads.at(tap.b).value();
  Mat out(gw.rows() + 1, gw.cols());
  out.topRows(gw.rows()) = gw;
  out.bottomRows(1) = gb;
  return out;
}

struct PreconditionedSide {
  std::vector<Mat> deltas;  // per tap, stacked layout
  double quad = 0.0;
};

}  // namespace

AcktrTrainer::AcktrTrainer(const TrainConfig& cfg, const PolicyValueNet& net)
    : cfg_(cfg) {
  (void)net;
}

void AcktrTrainer::ensure_states(const std::vector<LayerTap>& taps) {
  for (const LayerTap& tap : taps) {
    auto it = states_.find(tap.name);
    if (it == states_.end()) {
      KfacLayerState st;
      st.init(static_cast<int>(tap.W.rows()) + 1, static_cast<int>(tap.W.cols()));
      states_.emplace(tap.name, std::move(st));
    }
  }
}

void AcktrTrainer::refresh_if_due() {
  for (auto& [name, st] : states_) {
    if (!st.inv_valid || st.staleness >= cfg_.kfac_invert_every) {
      try {
        st.refresh(cfg_.kfac_damping);
      } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (layer " + name + ")");
      }
    }
  }
}

const KfacLayerState& AcktrTrainer::layer_state(const std::string& name) const {
  auto it = states_.find(name);
  if (it == states_.end())
    throw ContractError("AcktrTrainer::layer_state: unknown layer " + name);
  return it->second;
}

int AcktrTrainer::max_staleness() const {
  int worst = 0;
  for (const auto& [name, st] : states_) worst = std::max(worst, st.staleness);
  return worst;
}

AcktrReport AcktrTrainer::update(PolicyValueNet& net, const TrajectoryBatch& batch,
                                 Rng& rng) {
  AcktrReport rep;
  const int T = batch.T();
  const bool joint = net.spec().sharing == Sharing::kSharedTrunk;

  // Critic targets per Algorithm 3's backward recursion, segment by segment.
  Vec targets(T);
  {
    int start = 0;
    for (int seg = 0; seg < batch.segments(); ++seg) {
      const int end = batch.segment_ends[static_cast<std::size_t>(seg)];
      const int len = end - start;
      std::vector<std::uint8_t> term(batch.terminals.begin() + start,
                                     batch.terminals.begin() + end);
      targets.segment(start, len) = nstep_returns(
          batch.rewards.segment(start, len), term,
          batch.bootstrap_values[static_cast<std::size_t>(seg)], cfg_.gamma, len);
      start = end;
    }
  }
  {
    const Vec v = net.value_batch(batch.states);
    rep.value_loss_before = (v - targets).squaredNorm() / T;
  }

  // --- objective gradients ---
  Tape tape;
  auto bound = net.bind(tape);
  auto jg = bound.joint_forward(batch.states);
  Tensor lp = log_prob_rows(jg.mean, bound.log_std(), batch.actions);
  Tensor adv = tape.constant(Mat(batch.advantages));
  Tensor actor_obj = mean(lp * adv);
  Tensor critic_loss =
      0.5 * mean(square(jg.value - tape.constant(Mat(targets))));
  rep.actor_objective = actor_obj.scalar();

  std::vector<LayerTap> actor_taps = jg.trunk_taps;
  actor_taps.insert(actor_taps.end(), jg.policy_taps.begin(), jg.policy_taps.end());
  std::vector<LayerTap> critic_taps = jg.value_taps;

  // --- Fisher factor pass on a second binding ---
  {
    Tape ftape;
    auto fbound = net.bind(ftape);
    auto fjg = fbound.joint_forward(batch.states);
    const RowVec ls = net.clamped_log_std();
    Mat fisher_actions;
    if (cfg_.kfac_empirical_fisher) {
      fisher_actions = batch.actions;
    } else {
      // true Fisher: sample from the model's own output distribution
      fisher_actions = fjg.mean.value();
      for (int t = 0; t < T; ++t)
        for (int c = 0; c < net.act_dim(); ++c)
          fisher_actions(t, c) += std::exp(ls[c]) * rng.normal();
    }
    Tensor floss = sum(log_prob_rows(fjg.mean, fbound.log_std(), fisher_actions));
    const bool sampled_critic = joint || cfg_.kfac_critic_mode == "sampled";
    Tensor vsum;
    if (sampled_critic) {
      // p(v|s) = N(v; V(s), 1) with v sampled independently of the actor head
      Mat sampled_v = fjg.value.value();
      for (int t = 0; t < T; ++t) sampled_v(t, 0) += rng.normal();
      Tensor resid = ftape.constant(sampled_v) - fjg.value;
      Tensor critic_ll = -0.5 * sum(square(resid));
      floss = joint ? floss + critic_ll : floss;
      if (!joint) vsum = critic_ll;
    } else {
      // Gauss-Newton: E[g g^T] over N(V,1) reduces to unit output gradients
      vsum = sum(fjg.value);
    }

    Gradients fgrads = backward(floss);
    ensure_states(jg.trunk_taps);
    ensure_states(fjg.policy_taps);
    ensure_states(fjg.value_taps);
    auto accumulate_taps = [&](const std::vector<LayerTap>& taps, Gradients& gg) {
      for (const LayerTap& tap : taps) {
        const Mat a_rows = with_bias_column(tap.input.value());
        const Mat g_rows = gg.at(tap.preact).value();
        states_[tap.name].accumulate(a_rows, g_rows, cfg_.kfac_decay);
      }
    };
    accumulate_taps(fjg.trunk_taps, fgrads);
    accumulate_taps(fjg.policy_taps, fgrads);
    if (joint) {
      accumulate_taps(fjg.value_taps, fgrads);
    } else {
      Gradients vgrads = backward(vsum);
      accumulate_taps(fjg.value_taps, vgrads);
    }
  }

  refresh_if_due();
  for (auto& [name, st] : states_) {
    rep.max_factor_cond = std::max(rep.max_factor_cond, std::max(st.cond_a, st.cond_g));
  }

  // --- precondition and step ---
  const double logstd_fisher = 2.0 + cfg_.kfac_damping;  // exact diagonal block
  auto precondition = [&](Gradients& grads, const std::vector<LayerTap>& taps) {
    PreconditionedSide side;
    for (const LayerTap& tap : taps) {
      const Mat g = stacked_grad(grads, tap);
      Mat d = kfac_step(states_[tap.name], g);
      side.quad += kfac_quadratic_form(states_[tap.name], d);
      side.deltas.push_back(std::move(d));
    }
    return side;
  };
  auto apply = [&](const std::vector<LayerTap>& taps, const PreconditionedSide& side,
                   double eta, double sign, PolicyValueNet& target) {
    auto mats = target.param_mats();
    auto names = target.param_names();
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const LayerTap& tap = taps[k];
      const Mat& d = side.deltas[k];
      // locate the W/b mats by name
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == tap.name + ".W")
          *mats[i] += sign * eta * d.topRows(d.rows() - 1);
        else if (names[i] == tap.name + ".b")
          *mats[i] += sign * eta * d.bottomRows(1);
      }
    }
  };

  if (joint) {
    Tensor total = actor_obj - cfg_.vf_coef * critic_loss;
    Gradients grads = backward(total);
    std::vector<LayerTap> all_taps = actor_taps;
    all_taps.insert(all_taps.end(), critic_taps.begin(), critic_taps.end());
    PreconditionedSide side = precondition(grads, all_taps);
    const Mat ls_grad = grads.at(bound.policy_leaves().back()).value();
    const Mat ls_delta = ls_grad / logstd_fisher;
    side.quad += logstd_fisher * ls_delta.squaredNorm();
    const double eta = trust_region_eta(side.quad, cfg_.kfac_delta, cfg_.kfac_eta_max);
    rep.eta_actor = rep.eta_critic = eta;
    apply(all_taps, side, eta, +1.0, net);
    net.log_std() += eta * ls_delta;
  } else {
    Gradients agrads = backward(actor_obj);
    PreconditionedSide actor_side = precondition(agrads, actor_taps);
    const Mat ls_grad = agrads.at(bound.policy_leaves().back()).value();
    const Mat ls_delta = ls_grad / logstd_fisher;
    actor_side.quad += logstd_fisher * ls_delta.squaredNorm();
    const double eta_a =
        trust_region_eta(actor_side.quad, cfg_.kfac_delta, cfg_.kfac_eta_max);
    rep.eta_actor = eta_a;

    Gradients vgrads = backward(critic_loss);
    PreconditionedSide critic_side = precondition(vgrads, critic_taps);
    const double eta_v =
        trust_region_eta(critic_side.quad, cfg_.kfac_delta, cfg_.kfac_eta_max);
    rep.eta_critic = eta_v;

    apply(actor_taps, actor_side, eta_a, +1.0, net);   // ascend the objective
    net.log_std() += eta_a * ls_delta;
    apply(critic_taps, critic_side, eta_v, -1.0, net);  // descend the value error
  }

  for (auto& [name, st] : states_) st.staleness += 1;
  update_index_ += 1;

  {
    const Vec v = net.value_batch(batch.states);
    rep.value_loss_after = (v - targets).squaredNorm() / T;
    const Mat mean_now = net.policy_mean_batch(batch.states);
    const RowVec ls = net.clamped_log_std();
    double acc = 0.0;
    for (int t = 0; t < T; ++t) {
      DiagonalGaussian oldd, newd;
      oldd.mean = batch.old_mean.row(t);
      oldd.log_std = batch.old_log_std.row(t);
      newd.mean = mean_now.row(t);
      newd.log_std = ls;
      acc += kl_divergence(oldd, newd);
    }
    rep.kl = acc / T;
  }
  return rep;
}

void AcktrTrainer::save_state(std::ostream& os) const {
  os << "acktr_state " << update_index_ << " " << states_.size() << "\n";
  for (const auto& [name, st] : states_) {
    os << name << "\n";
    st.save(os);
  }
}

void AcktrTrainer::load_state(std::istream& is) {
  std::string tok;
  std::size_t n = 0;
  is >> tok >> update_index_ >> n;
  if (tok != "acktr_state") throw ContractError("AcktrTrainer::load_state: bad header");
  states_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    is >> name;
    KfacLayerState st;
    st.load(is);
    states_.emplace(name, std::move(st));
  }
}

}  // namespace polgrad
