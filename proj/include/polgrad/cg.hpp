#pragma once

// Conjugate gradient for symmetric positive-definite operators given as a
// matrix-vector product callback.

#include <functional>

#include "polgrad/tensor.hpp"

namespace polgrad {

struct CgResult {
  Vec x;
  double residual_norm = 0.0;  // true residual |A x - g|
  double relative_residual = 0.0;
  int iterations = 0;
};

using MatVec = std::function<Vec(const Vec&)>;

// Solves A x = g from x0 = 0. Stops when |A x - g| <= tol * |g| or after
// max_iters. Non-finite values abort with a diagnostic.
CgResult conjugate_gradient(const MatVec& avp, const Vec& g, int max_iters,
                            double tol);

}  // namespace polgrad
