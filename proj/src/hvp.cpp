#include "polgrad/hvp.hpp"

namespace polgrad {

Vec hessian_vector_product(const ScalarGraphBuilder& f,
                           const std::vector<const Mat*>& params, const Vec& v) {
  const std::size_t total = param_count(params);
  if (static_cast<std::size_t>(v.size()) != total)
    throw ContractError("hessian_vector_product: v length " +
                        std::to_string(v.size()) + " != parameter count " +
                        std::to_string(total));
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Mat* m : params) leaves.push_back(tape.input(*m, true));

  Tensor out = f(tape, leaves);
  Gradients grads = backward(out);

  // gradient . v, assembled as a graph node so it can be differentiated again
  Tensor gv;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Eigen::Index n = leaves[i].size();
    Mat vi = Eigen::Map<const Mat>(v.segment(at, n).data(), leaves[i].rows(),
                                   leaves[i].cols());
    Tensor term = dot(grads.at(leaves[i]), tape.constant(std::move(vi)));
    gv = gv.defined() ? gv + term : term;
    at += n;
  }

  Gradients second = backward(gv);
  Vec result(static_cast<Eigen::Index>(total));
  at = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Eigen::Index n = leaves[i].size();
    const Mat& g = second.at(leaves[i]).value();
    result.segment(at, n) = Eigen::Map<const Vec>(g.data(), n);
    at += n;
  }
  return result;
}

}  // namespace polgrad
