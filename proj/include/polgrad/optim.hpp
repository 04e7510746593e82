#pragma once

// First-order optimizers over lists of parameter matrices. State is
// serializable so training runs can resume bit-exactly.

#include <iosfwd>

#include "polgrad/tensor.hpp"

namespace polgrad {

class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Descends: params -= update. Pass negated gradients to ascend.
  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Plain fixed-step gradient descent.
void sgd_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads,
              double lr);

}  // namespace polgrad
