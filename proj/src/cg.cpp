#include "polgrad/cg.hpp"

#include <cmath>
#include <string>

namespace polgrad {

CgResult conjugate_gradient(const MatVec& avp, const Vec& g, int max_iters,
                            double tol) {
  CgResult res;
  res.x = Vec::Zero(g.size());
  const double gnorm = g.norm();
  if (gnorm == 0.0) return res;

  Vec r = g;  // residual of A x - g with x = 0
  Vec p = r;
  double rs = r.squaredNorm();
  const double stop = tol * gnorm;
  for (int it = 0; it < max_iters; ++it) {
    Vec ap = avp(p);
    if (!ap.allFinite())
      throw Error("conjugate_gradient: non-finite operator output at iteration " +
                  std::to_string(it));
    const double pap = p.dot(ap);
    if (!(pap > 0.0))
      throw Error("conjugate_gradient: operator not positive definite (p'Ap = " +
                  std::to_string(pap) + ") at iteration " + std::to_string(it));
    const double alpha = rs / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    res.iterations = it + 1;
    const double rs_new = r.squaredNorm();
    if (!std::isfinite(rs_new))
      throw Error("conjugate_gradient: non-finite residual at iteration " +
                  std::to_string(it));
    if (std::sqrt(rs_new) <= stop) break;
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  res.residual_norm = (avp(res.x) - g).norm();
  res.relative_residual = res.residual_norm / gnorm;
  return res;
}

}  // namespace polgrad
