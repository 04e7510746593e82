#include "polgrad/mlp.hpp"

#include <cmath>
#include <string>

namespace polgrad {

MlpParams MlpParams::create(const std::vector<int>& dims, Rng* rng,
                            double final_scale) {
  if (dims.size() < 2) throw ContractError("MlpParams::create: need >= 2 dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer;
    layer.W = Mat::Zero(dims[i], dims[i + 1]);
    layer.b = Mat::Zero(1, dims[i + 1]);
    if (rng) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(dims[i]));
      const double extra = (i + 2 == dims.size()) ? final_scale : 1.0;
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.W.cols(); ++c)
          layer.W(r, c) = rng->normal() * scale * extra;
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

int MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().W.rows());
}

int MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().W.cols());
}

std::vector<Mat*> MlpParams::mats() {
  std::vector<Mat*> out;
  for (DenseLayer& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

std::vector<const Mat*> MlpParams::mats() const {
  std::vector<const Mat*> out;
  for (const DenseLayer& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

MlpGraph mlp_forward(Tape& tape, const MlpParams& params, const Tensor& input) {
  MlpGraph g;
  Tensor x = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& l = params.layers[i];
    if (x.cols() != l.W.rows())
      throw ShapeError("mlp_forward: layer " + std::to_string(i) + " expects width " +
                       std::to_string(l.W.rows()) + ", got " +
                       std::to_string(x.cols()));
    Tensor W = tape.input(l.W, true);
    Tensor b = tape.input(l.b, true);
    Tensor pre = matmul(x, W) + broadcast_rows(b, x.rows());
    g.weights.push_back(W);
    g.biases.push_back(b);
    g.layer_inputs.push_back(x);
    g.preacts.push_back(pre);
    x = (i + 1 < params.layers.size()) ? tanh(pre) : pre;
  }
  g.output = x;
  return g;
}

MlpGraph mlp_forward(Tape& tape, const MlpParams& params, const Mat& input) {
  return mlp_forward(tape, params, tape.constant(input));
}

Mat mlp_apply(const MlpParams& params, const Mat& input) {
  Mat x = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseLayer& l = params.layers[i];
    if (x.cols() != l.W.rows())
      throw ShapeError("mlp_apply: layer " + std::to_string(i) + " expects width " +
                       std::to_string(l.W.rows()) + ", got " +
                       std::to_string(x.cols()));
    Mat pre = x * l.W;
    pre.rowwise() += l.b.row(0);
    x = (i + 1 < params.layers.size()) ? pre.array().tanh().matrix().eval() : pre;
  }
  return x;
}

std::size_t param_count(const std::vector<const Mat*>& mats) {
  std::size_t n = 0;
  for (const Mat* m : mats) n += static_cast<std::size_t>(m->size());
  return n;
}

Vec flatten_params(const std::vector<const Mat*>& mats) {
  Vec flat(static_cast<Eigen::Index>(param_count(mats)));
  Eigen::Index at = 0;
  for (const Mat* m : mats) {
    // Row-major storage, so a straight copy is the documented row-major order.
    flat.segment(at, m->size()) = Eigen::Map<const Vec>(m->data(), m->size());
    at += m->size();
  }
  return flat;
}

Vec flatten_params(const MlpParams& params) { return flatten_params(params.mats()); }

void unflatten_params(const Vec& flat, const std::vector<Mat*>& mats) {
  Eigen::Index total = 0;
  for (Mat* m : mats) total += m->size();
  if (flat.size() != total)
    throw ContractError("unflatten_params: flat length " + std::to_string(flat.size()) +
                        " != parameter count " + std::to_string(total));
  Eigen::Index at = 0;
  for (Mat* m : mats) {
    Eigen::Map<Vec>(m->data(), m->size()) = flat.segment(at, m->size());
    at += m->size();
  }
}

void unflatten_params(const Vec& flat, MlpParams& params) {
  auto m = params.mats();
  unflatten_params(flat, m);
}

}  // namespace polgrad
