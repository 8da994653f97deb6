#pragma once

#include <string>
#include <utility>
#include <vector>

#include "disco/ops.hpp"
#include "disco/rng.hpp"
#include "disco/tensor.hpp"

namespace disco::nn {

/// Ordered (name, parameter) list; the order is the checkpoint order.
template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
Tensor<T> randn(Shape shape, double stddev, Rng& rng);

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& params);

/// Marks every parameter as trainable (or frozen).
template <typename T>
void set_trainable(const ParamList<T>& params, bool on);

/// Copies values between two structurally identical parameter lists,
/// converting precision. Throws ContractError on any name/shape mismatch.
template <typename To, typename From>
void copy_param_values(const ParamList<To>& dst, const ParamList<From>& src);

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [out, in, k, k]
    Tensor<T> bias;    // [out]
    Conv2dSpec spec;

    static Conv2d make(std::size_t in, std::size_t out, std::size_t kernel, Conv2dSpec spec, Rng& rng,
                       double gain = 1.4142135623730951);
    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec); }
    void collect(ParamList<T>& out, const std::string& prefix) const;
};

template <typename T>
struct Dense {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out]

    static Dense make(std::size_t in, std::size_t out, Rng& rng, double stddev = -1.0);
    Tensor<T> operator()(const Tensor<T>& x) const { return dense(x, weight, bias); }
    void collect(ParamList<T>& out, const std::string& prefix) const;
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;

    static LayerNorm make(std::size_t dim);
    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
    void collect(ParamList<T>& out, const std::string& prefix) const;
};

}  // namespace disco::nn
