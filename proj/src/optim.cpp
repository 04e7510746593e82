#include "polgrad/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace polgrad {

void Adam::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size())
    throw ContractError("Adam::step: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size())
    throw ContractError("Adam::step: state does not match parameter list");
  t_ += 1;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& m = m_[i];
    Mat& v = v_[i];
    const Mat& g = grads[i];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = m / bc1;
    const Mat vhat = v / bc2;
    *params[i] -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
}

void Adam::save(std::ostream& os) const {
  os << "adam " << fmt_hex(lr_) << " " << fmt_hex(beta1_) << " " << fmt_hex(beta2_)
     << " " << fmt_hex(eps_) << " " << t_ << " " << m_.size() << "\n";
  auto dump = [&](const std::vector<Mat>& ms) {
    for (const Mat& m : ms) {
      os << m.rows() << " " << m.cols();
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << " " << fmt_hex(m(r, c));
      os << "\n";
    }
  };
  dump(m_);
  dump(v_);
}

void Adam::load(std::istream& is) {
  std::string tok;
  std::size_t n = 0;
  is >> tok;
  if (tok != "adam") throw ContractError("Adam::load: bad header");
  is >> tok;
  lr_ = parse_double(tok);
  is >> tok;
  beta1_ = parse_double(tok);
  is >> tok;
  beta2_ = parse_double(tok);
  is >> tok;
  eps_ = parse_double(tok);
  is >> t_ >> n;
  auto slurp = [&](std::vector<Mat>& ms) {
    ms.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index rows = 0, cols = 0;
      is >> rows >> cols;
      Mat m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          is >> tok;
          m(r, c) = parse_double(tok);
        }
      ms.push_back(std::move(m));
    }
  };
  slurp(m_);
  slurp(v_);
}

void sgd_step(const std::vector<Mat*>& params, const std::vector<Mat>& grads,
              double lr) {
  if (params.size() != grads.size())
    throw ContractError("sgd_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * grads[i];
}

}  // namespace polgrad
