#pragma once

// Dense matrices with a recording tape and reverse-mode differentiation.
//
// Every operation appends a node to the owning Tape; node creation order is a
// valid topological order, so the backward pass is a single reverse sweep.
// Gradients are themselves tape nodes built from the same primitives, which
// makes second-order quantities (Hessian-vector products) a matter of calling
// backward() twice. All storage is 64-bit, row-major.
//
// Tapes are independent: two tapes may be used concurrently from different
// threads, but a single tape is single-threaded. A Tape must outlive every
// Tensor handle that points into it.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "polgrad/common.hpp"

namespace polgrad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

enum class Op : std::uint8_t {
  kInput,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSum,       // (R,C) -> 1x1
  kMean,      // (R,C) -> 1x1
  kSumRows,   // (R,C) -> (1,C)
  kSumCols,   // (R,C) -> (R,1)
  kBcastRows,  // (1,C) -> (R,C)
  kBcastCols,  // (R,1) -> (R,C)
  kFill,       // 1x1 -> (R,C)
  kTranspose,
  kMin,   // elementwise; ties take the left operand
  kMax,
  kClip,  // scalar bounds in c0/c1; gradient passes on [lo, hi]
  kScalarMul,
  kScalarAdd,
};

class Tape;
class Tensor;
class Gradients;
Gradients backward(const Tensor& output);

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return tape_ != nullptr; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }
  bool requires_grad() const;
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int index() const { return idx_; }

 private:
  friend class Tape;
  friend class Gradients;
  friend Gradients backward(const Tensor&);
  Tensor(Tape* t, int i) : tape_(t), idx_(i) {}

  Tape* tape_ = nullptr;
  int idx_ = -1;
};

struct TapeNode {
  Op op = Op::kInput;
  Mat value;
  int a = -1;
  int b = -1;
  double c0 = 0.0;
  double c1 = 0.0;
  bool requires_grad = false;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor input(Mat v, bool requires_grad = false);
  Tensor constant(Mat v) { return input(std::move(v), false); }
  Tensor scalar(double v, bool requires_grad = false);

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  // Recomputes every non-input node from its stored inputs and returns the
  // largest absolute deviation from the recorded value (0 for a healthy tape).
  double replay_max_abs_diff() const;

  Tensor emit(Op op, Mat value, int a, int b, double c0 = 0.0, double c1 = 0.0);

 private:
  std::vector<TapeNode> nodes_;
};

// Result of a backward sweep. Adjoints are tape nodes on the same tape, so
// they can be differentiated again. at() returns an explicit zero for leaves
// the output does not depend on.
class Gradients {
 public:
  Tensor at(const Tensor& x) const;
  bool has(const Tensor& x) const;

 private:
  friend Gradients backward(const Tensor&);
  Gradients(Tape* t, std::vector<int> adj) : tape_(t), adj_(std::move(adj)) {}
  Tape* tape_;
  std::vector<int> adj_;
};

// --- primitives ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // elementwise
Tensor operator/(const Tensor& a, const Tensor& b);  // elementwise
Tensor operator-(const Tensor& a);
Tensor operator*(double s, const Tensor& a);
inline Tensor operator*(const Tensor& a, double s) { return s * a; }
Tensor operator+(const Tensor& a, double s);
inline Tensor operator+(double s, const Tensor& a) { return a + s; }
inline Tensor operator-(const Tensor& a, double s) { return a + (-s); }

Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);
Tensor sum_cols(const Tensor& a);
Tensor broadcast_rows(const Tensor& row, Eigen::Index nrows);
Tensor broadcast_cols(const Tensor& col, Eigen::Index ncols);
Tensor fill_like(const Tensor& scalar, Eigen::Index rows, Eigen::Index cols);
Tensor transpose(const Tensor& a);
Tensor min(const Tensor& a, const Tensor& b);
Tensor max(const Tensor& a, const Tensor& b);
Tensor clip(const Tensor& a, double lo, double hi);

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(a * b); }

}  // namespace polgrad
