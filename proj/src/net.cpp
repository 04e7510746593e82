#include "polgrad/net.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace polgrad {

namespace {

std::vector<int> mlp_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

void write_mat(std::ostream& os, const std::string& name, const Mat& m) {
  os << "param " << name << " " << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << " ";
      os << fmt_hex(m(r, c));
    }
    os << "\n";
  }
}

Mat read_mat(std::istream& is, const std::string& expect_name) {
  std::string tok, name;
  Eigen::Index rows = 0, cols = 0;
  is >> tok >> name >> rows >> cols;
  if (tok != "param" || name != expect_name)
    throw ContractError("checkpoint: expected param " + expect_name + ", got " + tok +
                        " " + name);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      is >> tok;
      m(r, c) = parse_double(tok);
    }
  return m;
}

}  // namespace

PolicyValueNet PolicyValueNet::create(const NetSpec& spec, Rng& rng) {
  if (spec.obs_dim <= 0 || spec.act_dim <= 0)
    throw ContractError("PolicyValueNet::create: bad dimensions");
  PolicyValueNet net;
  net.spec_ = spec;
  // Small final policy layer: a fresh policy should be near-zero mean so the
  // first trust-region steps are well conditioned.
  const double policy_head_scale = 0.01;
  if (spec.sharing == Sharing::kSharedTrunk) {
    if (spec.hidden.empty())
      throw ContractError("PolicyValueNet::create: shared trunk needs hidden layers");
    std::vector<int> trunk_dims;
    trunk_dims.push_back(spec.obs_dim);
    trunk_dims.insert(trunk_dims.end(), spec.hidden.begin(), spec.hidden.end());
    net.trunk_ = MlpParams::create(trunk_dims, &rng);
    // trunk ends with tanh: create() treats the last dim as the linear output
    // layer, so trunk graphs apply tanh explicitly (see trunk_forward).
    net.policy_ = MlpParams::create({spec.hidden.back(), spec.act_dim}, &rng,
                                    policy_head_scale);
    net.value_ = MlpParams::create({spec.hidden.back(), 1}, &rng);
  } else {
    net.policy_ = MlpParams::create(mlp_dims(spec.obs_dim, spec.hidden, spec.act_dim),
                                    &rng, policy_head_scale);
    net.value_ = MlpParams::create(mlp_dims(spec.obs_dim, spec.hidden, 1), &rng);
  }
  net.log_std_ = Mat::Constant(1, spec.act_dim, spec.log_std_init);
  return net;
}

void PolicyValueNet::check_obs(Eigen::Index width, const char* where) const {
  if (width != spec_.obs_dim)
    throw ContractError(std::string(where) + ": observation width " +
                        std::to_string(width) + " != " + std::to_string(spec_.obs_dim));
}

Mat PolicyValueNet::trunk_apply(const Mat& obs) const {
  // Shared trunk applies tanh after its last linear layer as well.
  Mat h = mlp_apply(trunk_, obs);
  return h.array().tanh();
}

DiagonalGaussian PolicyValueNet::policy(const RowVec& obs) const {
  check_obs(obs.size(), "policy");
  Mat row = obs;
  DiagonalGaussian d;
  d.mean = policy_mean_batch(row).row(0);
  d.log_std = clamped_log_std();
  return d;
}

Mat PolicyValueNet::policy_mean_batch(const Mat& obs) const {
  check_obs(obs.cols(), "policy_mean_batch");
  if (spec_.sharing == Sharing::kSharedTrunk)
    return mlp_apply(policy_, trunk_apply(obs));
  return mlp_apply(policy_, obs);
}

RowVec PolicyValueNet::clamped_log_std() const {
  return log_std_.row(0).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double PolicyValueNet::value(const RowVec& obs) const {
  check_obs(obs.size(), "value");
  Mat row = obs;
  return value_batch(row)[0];
}

Vec PolicyValueNet::value_batch(const Mat& obs) const {
  check_obs(obs.cols(), "value_batch");
  Mat out = spec_.sharing == Sharing::kSharedTrunk ? mlp_apply(value_, trunk_apply(obs))
                                                   : mlp_apply(value_, obs);
  return out.col(0);
}

std::vector<Mat*> PolicyValueNet::param_mats() {
  std::vector<Mat*> out;
  for (Mat* m : trunk_.mats()) out.push_back(m);
  for (Mat* m : policy_.mats()) out.push_back(m);
  out.push_back(&log_std_);
  for (Mat* m : value_.mats()) out.push_back(m);
  return out;
}

std::vector<const Mat*> PolicyValueNet::param_mats() const {
  std::vector<const Mat*> out;
  for (const Mat* m : trunk_.mats()) out.push_back(m);
  for (const Mat* m : policy_.mats()) out.push_back(m);
  out.push_back(&log_std_);
  for (const Mat* m : value_.mats()) out.push_back(m);
  return out;
}

std::vector<std::string> PolicyValueNet::param_names() const {
  std::vector<std::string> names;
  auto layer_names = [&](const MlpParams& p, const std::string& prefix) {
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      names.push_back(prefix + "." + std::to_string(i) + ".W");
      names.push_back(prefix + "." + std::to_string(i) + ".b");
    }
  };
  layer_names(trunk_, "trunk");
  layer_names(policy_, "policy");
  names.push_back("log_std");
  layer_names(value_, "value");
  return names;
}

std::vector<Mat*> PolicyValueNet::policy_param_mats() {
  std::vector<Mat*> out;
  for (Mat* m : trunk_.mats()) out.push_back(m);
  for (Mat* m : policy_.mats()) out.push_back(m);
  out.push_back(&log_std_);
  return out;
}

std::vector<const Mat*> PolicyValueNet::policy_param_mats() const {
  std::vector<const Mat*> out;
  for (const Mat* m : trunk_.mats()) out.push_back(m);
  for (const Mat* m : policy_.mats()) out.push_back(m);
  out.push_back(&log_std_);
  return out;
}

std::vector<Mat*> PolicyValueNet::value_param_mats() {
  std::vector<Mat*> out;
  for (Mat* m : trunk_.mats()) out.push_back(m);
  for (Mat* m : value_.mats()) out.push_back(m);
  return out;
}

std::vector<const Mat*> PolicyValueNet::value_param_mats() const {
  std::vector<const Mat*> out;
  for (const Mat* m : trunk_.mats()) out.push_back(m);
  for (const Mat* m : value_.mats()) out.push_back(m);
  return out;
}

void PolicyValueNet::set_policy_from_flat(const Vec& flat) {
  auto mats = policy_param_mats();
  unflatten_params(flat, mats);
}

// --- taped graphs ---

PolicyValueNet::Bound PolicyValueNet::bind(Tape& tape) const {
  Bound b;
  b.tape_ = &tape;
  b.net_ = this;
  auto bind_mlp = [&](const MlpParams& p, std::vector<Tensor>& leaves) {
    for (const DenseLayer& l : p.layers) {
      leaves.push_back(tape.input(l.W, true));
      leaves.push_back(tape.input(l.b, true));
    }
  };
  bind_mlp(trunk_, b.trunk_leaves_);
  bind_mlp(policy_, b.policy_mlp_leaves_);
  bind_mlp(value_, b.value_mlp_leaves_);
  b.log_std_raw_ = tape.input(log_std_, true);
  b.log_std_clipped_ = clip(b.log_std_raw_, kLogStdMin, kLogStdMax);

  b.policy_leaves_ = b.trunk_leaves_;
  b.policy_leaves_.insert(b.policy_leaves_.end(), b.policy_mlp_leaves_.begin(),
                          b.policy_mlp_leaves_.end());
  b.policy_leaves_.push_back(b.log_std_raw_);
  b.value_leaves_ = b.trunk_leaves_;
  b.value_leaves_.insert(b.value_leaves_.end(), b.value_mlp_leaves_.begin(),
                         b.value_mlp_leaves_.end());
  return b;
}

std::vector<Tensor> PolicyValueNet::Bound::all_leaves() const {
  std::vector<Tensor> out = trunk_leaves_;
  out.insert(out.end(), policy_mlp_leaves_.begin(), policy_mlp_leaves_.end());
  out.push_back(log_std_raw_);
  out.insert(out.end(), value_mlp_leaves_.begin(), value_mlp_leaves_.end());
  return out;
}

namespace {

// Runs the bound layers of one MLP; records taps when requested.
Tensor run_bound_mlp(Tape& tape, const std::vector<Tensor>& leaves, Tensor x,
                     bool tanh_last, const std::string& name,
                     std::vector<LayerTap>* taps) {
  const std::size_t n_layers = leaves.size() / 2;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const Tensor& W = leaves[2 * i];
    const Tensor& bb = leaves[2 * i + 1];
    if (x.cols() != W.rows())
      throw ShapeError("net forward: layer " + name + "." + std::to_string(i) +
                       " expects width " + std::to_string(W.rows()) + ", got " +
                       std::to_string(x.cols()));
    Tensor pre = matmul(x, W) + broadcast_rows(bb, x.rows());
    if (taps)
      taps->push_back(LayerTap{x, pre, W, bb, name + "." + std::to_string(i)});
    const bool last = i + 1 == n_layers;
    x = (!last || tanh_last) ? tanh(pre) : pre;
  }
  (void)tape;
  return x;
}

}  // namespace

Tensor PolicyValueNet::Bound::trunk_forward(const Mat& obs,
                                            std::vector<LayerTap>* taps) {
  Tensor x = tape_->constant(obs);
  if (trunk_leaves_.empty()) return x;
  return run_bound_mlp(*tape_, trunk_leaves_, x, /*tanh_last=*/true, "trunk", taps);
}

Tensor PolicyValueNet::Bound::policy_mean(const Mat& obs, std::vector<LayerTap>* taps) {
  net_->check_obs(obs.cols(), "Bound::policy_mean");
  Tensor h = trunk_forward(obs, taps);
  return run_bound_mlp(*tape_, policy_mlp_leaves_, h, /*tanh_last=*/false, "policy",
                       taps);
}

Tensor PolicyValueNet::Bound::value_out(const Mat& obs, std::vector<LayerTap>* taps) {
  net_->check_obs(obs.cols(), "Bound::value_out");
  Tensor h = trunk_forward(obs, taps);
  return run_bound_mlp(*tape_, value_mlp_leaves_, h, /*tanh_last=*/false, "value",
                       taps);
}

PolicyValueNet::Bound::JointGraph PolicyValueNet::Bound::joint_forward(const Mat& obs) {
  net_->check_obs(obs.cols(), "Bound::joint_forward");
  JointGraph jg;
  Tensor h = trunk_forward(obs, &jg.trunk_taps);
  jg.mean = run_bound_mlp(*tape_, policy_mlp_leaves_, h, /*tanh_last=*/false,
                          "policy", &jg.policy_taps);
  jg.value = run_bound_mlp(*tape_, value_mlp_leaves_, h, /*tanh_last=*/false, "value",
                           &jg.value_taps);
  return jg;
}

// --- checkpoint section ---

void PolicyValueNet::save(std::ostream& os) const {
  os << "net obs_dim " << spec_.obs_dim << " act_dim " << spec_.act_dim << " sharing "
     << (spec_.sharing == Sharing::kSharedTrunk ? "shared" : "disjoint")
     << " log_std_init " << fmt_hex(spec_.log_std_init) << "\n";
  os << "hidden";
  for (int h : spec_.hidden) os << " " << h;
  os << "\n";
  const auto names = param_names();
  const auto mats = param_mats();
  os << "params " << mats.size() << "\n";
  for (std::size_t i = 0; i < mats.size(); ++i) write_mat(os, names[i], *mats[i]);
}

PolicyValueNet PolicyValueNet::load(std::istream& is) {
  std::string tok;
  NetSpec spec;
  std::string sharing;
  is >> tok;
  if (tok != "net") throw ContractError("checkpoint: expected 'net' section");
  is >> tok >> spec.obs_dim >> tok >> spec.act_dim >> tok >> sharing >> tok >> tok;
  spec.log_std_init = parse_double(tok);
  spec.sharing = sharing == "shared" ? Sharing::kSharedTrunk : Sharing::kDisjoint;
  is >> tok;  // "hidden"
  spec.hidden.clear();
  {
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    int h;
    while (ls >> h) spec.hidden.push_back(h);
  }
  Rng dummy(0);
  PolicyValueNet net = create(spec, dummy);
  std::size_t n_params = 0;
  is >> tok >> n_params;
  if (tok != "params") throw ContractError("checkpoint: expected 'params'");
  const auto names = net.param_names();
  auto mats = net.param_mats();
  if (n_params != mats.size())
    throw ContractError("checkpoint: param count mismatch");
  for (std::size_t i = 0; i < mats.size(); ++i) *mats[i] = read_mat(is, names[i]);
  return net;
}

}  // namespace polgrad
