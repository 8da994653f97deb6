#pragma once

#include <functional>
#include <vector>

#include "disco/tensor.hpp"

namespace disco::nn {

/// Maximum over elements of |analytic - central_difference| / max(1, |analytic|)
/// for a scalar function of one float64 input tensor.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn, const Tensor<double>& input,
                  double eps = 1e-5);

/// Same check over a set of leaf tensors that `fn` closes over (typically
/// model parameters). Each leaf is perturbed in place and restored.
double grad_check_params(const std::function<Tensor<double>()>& fn, std::vector<Tensor<double>> leaves,
                         double eps = 1e-5);

}  // namespace disco::nn
