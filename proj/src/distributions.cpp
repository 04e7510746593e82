#include "polgrad/distributions.hpp"

#include <cmath>
#include <string>

namespace polgrad {

RowVec sample(const DiagonalGaussian& d, Rng& rng) {
  const RowVec ls = d.clamped_log_std();
  RowVec out(d.mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out[i] = d.mean[i] + std::exp(ls[i]) * rng.normal();
  return out;
}

double log_prob(const DiagonalGaussian& d, const RowVec& action) {
  if (action.size() != d.mean.size())
    throw ContractError("log_prob: action width " + std::to_string(action.size()) +
                        " != " + std::to_string(d.mean.size()));
  const RowVec ls = d.clamped_log_std();
  double lp = -0.5 * kLn2Pi * static_cast<double>(d.dim());
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double z = (action[i] - d.mean[i]) * std::exp(-ls[i]);
    lp -= 0.5 * z * z + ls[i];
  }
  return lp;
}

double kl_divergence(const DiagonalGaussian& from, const DiagonalGaussian& to) {
  if (from.dim() != to.dim())
    throw ContractError("kl_divergence: dimension mismatch");
  const RowVec ls_p = from.clamped_log_std();
  const RowVec ls_q = to.clamped_log_std();
  double kl = 0.0;
  for (int i = 0; i < from.dim(); ++i) {
    const double var_p = std::exp(2.0 * ls_p[i]);
    const double var_q = std::exp(2.0 * ls_q[i]);
    const double dmu = to.mean[i] - from.mean[i];
    kl += ls_q[i] - ls_p[i] + (var_p + dmu * dmu) / (2.0 * var_q) - 0.5;
  }
  return kl;
}

double entropy(const DiagonalGaussian& d) {
  const RowVec ls = d.clamped_log_std();
  return 0.5 * static_cast<double>(d.dim()) * (kLn2Pi + 1.0) + ls.sum();
}

Tensor log_prob_rows(const Tensor& mean, const Tensor& log_std, const Mat& actions) {
  if (actions.rows() != mean.rows() || actions.cols() != mean.cols())
    throw ShapeError("log_prob_rows: actions shape mismatch");
  Tape& t = *mean.tape();
  const Eigen::Index T = mean.rows();
  Tensor ls = broadcast_rows(log_std, T);
  Tensor z = (t.constant(actions) - mean) * exp(-ls);
  Tensor quad = sum_cols(square(z));
  Tensor logdet = sum_cols(ls);
  return -0.5 * quad - logdet +
         (-0.5 * kLn2Pi * static_cast<double>(mean.cols()));
}

Tensor kl_rows(const Mat& old_mean, const RowVec& old_log_std, const Tensor& new_mean,
               const Tensor& new_log_std) {
  if (old_mean.rows() != new_mean.rows() || old_mean.cols() != new_mean.cols())
    throw ShapeError("kl_rows: mean shape mismatch");
  Tape& t = *new_mean.tape();
  const Eigen::Index T = new_mean.rows();
  const Eigen::Index M = new_mean.cols();
  Tensor ls_new = broadcast_rows(new_log_std, T);
  Tensor ls_old = t.constant(Mat(old_log_std.replicate(T, 1)));
  Tensor mu_old = t.constant(old_mean);
  Tensor var_old = exp(2.0 * ls_old);
  Tensor inv_two_var_new = 0.5 * exp(-2.0 * ls_new);
  Tensor dmu2 = square(mu_old - new_mean);
  Tensor per = ls_new - ls_old + (var_old + dmu2) * inv_two_var_new +
               (-0.5);
  return sum_cols(per);
}

Tensor entropy_scalar(const Tensor& log_std) {
  const double m = static_cast<double>(log_std.cols());
  return sum(log_std) + 0.5 * m * (kLn2Pi + 1.0);
}

}  // namespace polgrad
