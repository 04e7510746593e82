#pragma once

// Hessian-vector products by double application of reverse mode: H·v is the
// gradient of (gradient · v). Exact to machine precision, no finite
// differencing involved.

#include <functional>

#include "polgrad/mlp.hpp"

namespace polgrad {

// Builds a scalar graph from parameter leaves bound on the given tape. Leaves
// are aligned with the parameter matrices passed to hessian_vector_product.
using ScalarGraphBuilder =
    std::function<Tensor(Tape&, const std::vector<Tensor>& leaves)>;

Vec hessian_vector_product(const ScalarGraphBuilder& f,
                           const std::vector<const Mat*>& params, const Vec& v);

}  // namespace polgrad
