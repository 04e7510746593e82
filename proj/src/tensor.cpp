#include "polgrad/tensor.hpp"

#include <string>

namespace polgrad {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_defined(const Tensor& a, const char* op) {
  if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

void check_same_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined())
    throw ContractError(std::string(op) + ": undefined tensor operand");
  if (a.tape() != b.tape())
    throw ContractError(std::string(op) + ": operands live on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) +
                     " vs " + shape_str(b.value()));
}

}  // namespace

const Mat& Tensor::value() const {
  if (!defined()) throw ContractError("Tensor::value: undefined tensor");
  return tape_->node(idx_).value;
}

bool Tensor::requires_grad() const {
  if (!defined()) return false;
  return tape_->node(idx_).requires_grad;
}

double Tensor::scalar() const {
  if (!is_scalar())
    throw ContractError("Tensor::scalar: tensor is " + shape_str(value()) +
                        ", expected 1x1");
  return value()(0, 0);
}

Tensor Tape::input(Mat v, bool requires_grad) {
  TapeNode n;
  n.op = Op::kInput;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::scalar(double v, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = v;
  return input(std::move(m), requires_grad);
}

Tensor Tape::emit(Op op, Mat value, int a, int b, double c0, double c1) {
  TapeNode n;
  n.op = op;
  n.value = std::move(value);
  n.a = a;
  n.b = b;
  n.c0 = c0;
  n.c1 = c1;
  n.requires_grad = (a >= 0 && nodes_[static_cast<std::size_t>(a)].requires_grad) ||
                    (b >= 0 && nodes_[static_cast<std::size_t>(b)].requires_grad);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

// --- primitives ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + shape_str(a.value()) + " * " +
                     shape_str(b.value()));
  return a.tape()->emit(Op::kMatMul, a.value() * b.value(), a.index(), b.index());
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  return a.tape()->emit(Op::kAdd, a.value() + b.value(), a.index(), b.index());
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  return a.tape()->emit(Op::kSub, a.value() - b.value(), a.index(), b.index());
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "mul");
  check_same_shape(a, b, "mul");
  return a.tape()->emit(Op::kMul, a.value().cwiseProduct(b.value()), a.index(),
                        b.index());
}

Tensor operator/(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "div");
  check_same_shape(a, b, "div");
  return a.tape()->emit(Op::kDiv, a.value().cwiseQuotient(b.value()), a.index(),
                        b.index());
}

Tensor operator-(const Tensor& a) {
  check_defined(a, "neg");
  return a.tape()->emit(Op::kNeg, -a.value(), a.index(), -1);
}

Tensor operator*(double s, const Tensor& a) {
  check_defined(a, "scalar_mul");
  return a.tape()->emit(Op::kScalarMul, s * a.value(), a.index(), -1, s);
}

Tensor operator+(const Tensor& a, double s) {
  check_defined(a, "scalar_add");
  return a.tape()->emit(Op::kScalarAdd, a.value().array() + s, a.index(), -1, s);
}

Tensor tanh(const Tensor& a) {
  check_defined(a, "tanh");
  return a.tape()->emit(Op::kTanh, a.value().array().tanh(), a.index(), -1);
}

Tensor exp(const Tensor& a) {
  check_defined(a, "exp");
  return a.tape()->emit(Op::kExp, a.value().array().exp(), a.index(), -1);
}

Tensor log(const Tensor& a) {
  check_defined(a, "log");
  return a.tape()->emit(Op::kLog, a.value().array().log(), a.index(), -1);
}

Tensor square(const Tensor& a) {
  check_defined(a, "square");
  return a.tape()->emit(Op::kSquare, a.value().array().square(), a.index(), -1);
}

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  Mat m(1, 1);
  m(0, 0) = a.value().sum();
  return a.tape()->emit(Op::kSum, std::move(m), a.index(), -1);
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  Mat m(1, 1);
  m(0, 0) = a.value().mean();
  return a.tape()->emit(Op::kMean, std::move(m), a.index(), -1);
}

Tensor sum_rows(const Tensor& a) {
  check_defined(a, "sum_rows");
  return a.tape()->emit(Op::kSumRows, a.value().colwise().sum(), a.index(), -1);
}

Tensor sum_cols(const Tensor& a) {
  check_defined(a, "sum_cols");
  return a.tape()->emit(Op::kSumCols, a.value().rowwise().sum(), a.index(), -1);
}

Tensor broadcast_rows(const Tensor& row, Eigen::Index nrows) {
  check_defined(row, "broadcast_rows");
  if (row.rows() != 1)
    throw ShapeError("broadcast_rows: expected a row vector, got " +
                     shape_str(row.value()));
  Mat m = row.value().replicate(nrows, 1);
  return row.tape()->emit(Op::kBcastRows, std::move(m), row.index(), -1,
                          static_cast<double>(nrows));
}

Tensor broadcast_cols(const Tensor& col, Eigen::Index ncols) {
  check_defined(col, "broadcast_cols");
  if (col.cols() != 1)
    throw ShapeError("broadcast_cols: expected a column vector, got " +
                     shape_str(col.value()));
  Mat m = col.value().replicate(1, ncols);
  return col.tape()->emit(Op::kBcastCols, std::move(m), col.index(), -1,
                          static_cast<double>(ncols));
}

Tensor fill_like(const Tensor& scalar, Eigen::Index rows, Eigen::Index cols) {
  check_defined(scalar, "fill_like");
  if (!scalar.is_scalar())
    throw ShapeError("fill_like: expected scalar, got " + shape_str(scalar.value()));
  Mat m = Mat::Constant(rows, cols, scalar.value()(0, 0));
  return scalar.tape()->emit(Op::kFill, std::move(m), scalar.index(), -1,
                             static_cast<double>(rows), static_cast<double>(cols));
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  return a.tape()->emit(Op::kTranspose, a.value().transpose(), a.index(), -1);
}

Tensor min(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "min");
  check_same_shape(a, b, "min");
  return a.tape()->emit(Op::kMin, a.value().cwiseMin(b.value()), a.index(), b.index());
}

Tensor max(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b, "max");
  check_same_shape(a, b, "max");
  return a.tape()->emit(Op::kMax, a.value().cwiseMax(b.value()), a.index(), b.index());
}

Tensor clip(const Tensor& a, double lo, double hi) {
  check_defined(a, "clip");
  if (!(lo <= hi)) throw ContractError("clip: lo > hi");
  Mat m = a.value().array().max(lo).min(hi);
  return a.tape()->emit(Op::kClip, std::move(m), a.index(), -1, lo, hi);
}

// --- replay ---

double Tape::replay_max_abs_diff() const {
  double worst = 0.0;
  for (const TapeNode& n : nodes_) {
    if (n.op == Op::kInput) continue;
    const Mat& A = nodes_[static_cast<std::size_t>(n.a)].value;
    const Mat* B = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    Mat r;
    switch (n.op) {
      case Op::kMatMul: r = A * *B; break;
      case Op::kAdd: r = A + *B; break;
      case Op::kSub: r = A - *B; break;
      case Op::kMul: r = A.cwiseProduct(*B); break;
      case Op::kDiv: r = A.cwiseQuotient(*B); break;
      case Op::kNeg: r = -A; break;
      case Op::kTanh: r = A.array().tanh(); break;
      case Op::kExp: r = A.array().exp(); break;
      case Op::kLog: r = A.array().log(); break;
      case Op::kSquare: r = A.array().square(); break;
      case Op::kSum: r = Mat::Constant(1, 1, A.sum()); break;
      case Op::kMean: r = Mat::Constant(1, 1, A.mean()); break;
      case Op::kSumRows: r = A.colwise().sum(); break;
      case Op::kSumCols: r = A.rowwise().sum(); break;
      case Op::kBcastRows: r = A.replicate(static_cast<Eigen::Index>(n.c0), 1); break;
      case Op::kBcastCols: r = A.replicate(1, static_cast<Eigen::Index>(n.c0)); break;
      case Op::kFill:
        r = Mat::Constant(static_cast<Eigen::Index>(n.c0),
                          static_cast<Eigen::Index>(n.c1), A(0, 0));
        break;
      case Op::kTranspose: r = A.transpose(); break;
      case Op::kMin: r = A.cwiseMin(*B); break;
      case Op::kMax: r = A.cwiseMax(*B); break;
      case Op::kClip: r = A.array().max(n.c0).min(n.c1); break;
      case Op::kScalarMul: r = n.c0 * A; break;
      case Op::kScalarAdd: r = A.array() + n.c0; break;
      case Op::kInput: break;
    }
    const double d = (r - n.value).cwiseAbs().maxCoeff();
    if (d > worst) worst = d;
  }
  return worst;
}

// --- backward ---

bool Gradients::has(const Tensor& x) const {
  return x.defined() && x.tape() == tape_ &&
         x.index() < static_cast<int>(adj_.size()) && adj_[x.index()] >= 0;
}

Tensor Gradients::at(const Tensor& x) const {
  if (!x.defined() || x.tape() != tape_)
    throw ContractError("Gradients::at: tensor not on this tape");
  if (has(x)) return Tensor(tape_, adj_[x.index()]);
  return tape_->constant(Mat::Zero(x.rows(), x.cols()));
}

Gradients backward(const Tensor& output) {
  if (!output.defined()) throw ContractError("backward: undefined tensor");
  if (!output.is_scalar())
    throw ContractError("backward: output must be scalar, got " +
                        std::to_string(output.rows()) + "x" +
                        std::to_string(output.cols()));
  Tape& t = *output.tape();
  const int root = output.index();
  std::vector<int> adj(static_cast<std::size_t>(root) + 1, -1);

  auto grad_of = [&](int i) { return Tensor(&t, adj[static_cast<std::size_t>(i)]); };
  auto accumulate = [&](int i, const Tensor& g) {
    if (i < 0) return;
    if (!t.node(i).requires_grad) return;
    int& slot = adj[static_cast<std::size_t>(i)];
    slot = slot < 0 ? g.index() : (grad_of(i) + g).index();
  };

  adj[static_cast<std::size_t>(root)] = t.constant(Mat::Ones(1, 1)).index();

  for (int i = root; i >= 0; --i) {
    if (adj[static_cast<std::size_t>(i)] < 0) continue;
    // Copy the node header: emitting gradient nodes below may reallocate the
    // tape and invalidate references into it.
    const TapeNode& nref = t.node(i);
    const Op op = nref.op;
    const int ia = nref.a;
    const int ib = nref.b;
    const double c0 = nref.c0;
    const double c1 = nref.c1;
    if (op == Op::kInput) continue;
    const Tensor g = grad_of(i);
    const Tensor out(&t, i);
    const Tensor a(&t, ia);
    switch (op) {
      case Op::kMatMul: {
        const Tensor b(&t, ib);
        accumulate(ia, matmul(g, transpose(b)));
        accumulate(ib, matmul(transpose(a), g));
        break;
      }
      case Op::kAdd: {
        accumulate(ia, g);
        accumulate(ib, g);
        break;
      }
      case Op::kSub: {
        accumulate(ia, g);
        accumulate(ib, -g);
        break;
      }
      case Op::kMul: {
        const Tensor b(&t, ib);
        accumulate(ia, g * b);
        accumulate(ib, g * a);
        break;
      }
      case Op::kDiv: {
        const Tensor b(&t, ib);
        accumulate(ia, g / b);
        accumulate(ib, -(g * out) / b);
        break;
      }
      case Op::kNeg: accumulate(ia, -g); break;
      case Op::kTanh: accumulate(ia, g * (-square(out) + 1.0)); break;
      case Op::kExp: accumulate(ia, g * out); break;
      case Op::kLog: accumulate(ia, g / a); break;
      case Op::kSquare: accumulate(ia, 2.0 * (g * a)); break;
      case Op::kSum: accumulate(ia, fill_like(g, a.rows(), a.cols())); break;
      case Op::kMean:
        accumulate(ia, (1.0 / static_cast<double>(a.size())) *
                           fill_like(g, a.rows(), a.cols()));
        break;
      case Op::kSumRows: accumulate(ia, broadcast_rows(g, a.rows())); break;
      case Op::kSumCols: accumulate(ia, broadcast_cols(g, a.cols())); break;
      case Op::kBcastRows: accumulate(ia, sum_rows(g)); break;
      case Op::kBcastCols: accumulate(ia, sum_cols(g)); break;
      case Op::kFill: accumulate(ia, sum(g)); break;
      case Op::kTranspose: accumulate(ia, transpose(g)); break;
      case Op::kMin:
      case Op::kMax: {
        const Tensor b(&t, ib);
        const bool is_min = op == Op::kMin;
        Mat mask_a(a.rows(), a.cols());
        {
          const Mat& av = a.value();
          const Mat& bv = b.value();
          for (Eigen::Index r = 0; r < av.rows(); ++r)
            for (Eigen::Index c = 0; c < av.cols(); ++c)
              mask_a(r, c) = (is_min ? av(r, c) <= bv(r, c) : av(r, c) >= bv(r, c))
                                 ? 1.0
                                 : 0.0;
        }
        const Tensor ma = t.constant(mask_a);
        const Tensor mb = t.constant(Mat::Ones(mask_a.rows(), mask_a.cols()) - mask_a);
        accumulate(ia, g * ma);
        accumulate(ib, g * mb);
        break;
      }
      case Op::kClip: {
        Mat mask(a.rows(), a.cols());
        {
          const Mat& av = a.value();
          for (Eigen::Index r = 0; r < av.rows(); ++r)
            for (Eigen::Index c = 0; c < av.cols(); ++c)
              mask(r, c) = (av(r, c) >= c0 && av(r, c) <= c1) ? 1.0 : 0.0;
        }
        accumulate(ia, g * t.constant(mask));
        break;
      }
      case Op::kScalarMul: accumulate(ia, c0 * g); break;
      case Op::kScalarAdd: accumulate(ia, g); break;
      case Op::kInput: break;
    }
  }
  return Gradients(&t, std::move(adj));
}

}  // namespace polgrad
