#pragma once

// Diagonal Gaussian action distribution: sampling, log density, entropy and
// KL divergence, in both plain (scalar, per-state) and taped (batched,
// differentiable) forms. log_std is clamped to [kLogStdMin, kLogStdMax]
// everywhere it is consumed, so degenerate densities cannot occur.

#include "polgrad/tensor.hpp"

namespace polgrad {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLn2Pi = 1.8378770664093454835606594728112;

struct DiagonalGaussian {
  RowVec mean;
  RowVec log_std;

  int dim() const { return static_cast<int>(mean.size()); }
  RowVec clamped_log_std() const {
    return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  }
};

RowVec sample(const DiagonalGaussian& d, Rng& rng);
double log_prob(const DiagonalGaussian& d, const RowVec& action);
double kl_divergence(const DiagonalGaussian& from, const DiagonalGaussian& to);
double entropy(const DiagonalGaussian& d);

// --- batched, taped forms ---
// mean: (T,M) graph tensor; log_std: (1,M) graph tensor (already clamped by
// the network); actions / old params are constants.

// Per-row log density, (T,1).
Tensor log_prob_rows(const Tensor& mean, const Tensor& log_std, const Mat& actions);
// Per-row KL(old || new), (T,1); old side held fixed.
Tensor kl_rows(const Mat& old_mean, const RowVec& old_log_std, const Tensor& new_mean,
               const Tensor& new_log_std);
// Mean entropy of the (state-independent) distribution, scalar.
Tensor entropy_scalar(const Tensor& log_std);

}  // namespace polgrad
