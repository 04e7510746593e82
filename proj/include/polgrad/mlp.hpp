#pragma once

// Multilayer perceptron on top of the tape: tanh hidden layers, linear output.
// Parameters flatten in layer order, weights before biases, row-major.

#include <vector>

#include "polgrad/tensor.hpp"

namespace polgrad {

struct DenseLayer {
  Mat W;  // (in, out)
  Mat b;  // (1, out)
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  // dims = {input, hidden..., output}. Weights are sampled N(0, 1/in) per
  // layer; the final layer is additionally scaled by final_scale so a fresh
  // policy starts close to uniform behaviour. rng == nullptr zero-initializes.
  static MlpParams create(const std::vector<int>& dims, Rng* rng,
                          double final_scale = 1.0);

  int input_dim() const;
  int output_dim() const;
  std::vector<Mat*> mats();
  std::vector<const Mat*> mats() const;
};

// Graph handles from one taped forward pass. layer_inputs[i] feeds layer i and
// preacts[i] is its pre-activation output; both are kept for K-FAC statistics.
struct MlpGraph {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::vector<Tensor> layer_inputs;
  std::vector<Tensor> preacts;
  Tensor output;
};

MlpGraph mlp_forward(Tape& tape, const MlpParams& params, const Tensor& input);
MlpGraph mlp_forward(Tape& tape, const MlpParams& params, const Mat& input);

// Forward pass without recording; used on hot paths (rollout collection).
Mat mlp_apply(const MlpParams& params, const Mat& input);

// --- flat parameter vector utilities ---
Vec flatten_params(const std::vector<const Mat*>& mats);
Vec flatten_params(const MlpParams& params);
void unflatten_params(const Vec& flat, const std::vector<Mat*>& mats);
void unflatten_params(const Vec& flat, MlpParams& params);
std::size_t param_count(const std::vector<const Mat*>& mats);

}  // namespace polgrad
