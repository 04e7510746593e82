#pragma once

// Shared test utilities: independent oracles and finite-difference checks.
// Everything here is deliberately written with plain loops so it shares no
// code path with the library implementation it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "polgrad/mlp.hpp"

namespace polgrad::test {

// Straight-line MLP forward with raw loops (no tape, no Eigen products).
inline std::vector<double> plain_mlp_forward(const MlpParams& p,
                                             const std::vector<double>& input) {
  std::vector<double> x = input;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const Mat& W = p.layers[li].W;
    const Mat& b = p.layers[li].b;
    std::vector<double> y(static_cast<std::size_t>(W.cols()), 0.0);
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      double acc = b(0, c);
      for (Eigen::Index r = 0; r < W.rows(); ++r) acc += x[static_cast<std::size_t>(r)] * W(r, c);
      y[static_cast<std::size_t>(c)] = acc;
    }
    if (li + 1 < p.layers.size())
      for (double& v : y) v = std::tanh(v);
    x = std::move(y);
  }
  return x;
}

// Central finite-difference gradient of a scalar function of a flat vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-5) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vec& got, const Vec& want) {
  const double denom = want.norm();
  if (denom == 0.0) return got.norm();
  return (got - want).norm() / denom;
}

}  // namespace polgrad::test
