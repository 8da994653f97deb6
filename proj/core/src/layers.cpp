#include "disco/layers.hpp"

#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco::nn {

template <typename T>
Tensor<T> randn(Shape shape, double stddev, Rng& rng) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
    return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& params) {
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

template <typename T>
void set_trainable(const ParamList<T>& params, bool on) {
    for (const auto& [name, t] : params) Tensor<T>(t).set_requires_grad(on);
}

template <typename To, typename From>
void copy_param_values(const ParamList<To>& dst, const ParamList<From>& src) {
    require(dst.size() == src.size(), "copy_param_values: parameter counts differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const auto& [dn, dt] = dst[i];
        const auto& [sn, st] = src[i];
        if (dn != sn || dt.shape() != st.shape())
            throw ContractError(fmt::format("copy_param_values: {} {} vs {} {}", dn, shape_str(dt.shape()), sn,
                                            shape_str(st.shape())));
        auto& out = Tensor<To>(dt).values();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<To>(st.values()[j]);
    }
}

template <typename T>
Conv2d<T> Conv2d<T>::make(std::size_t in, std::size_t out, std::size_t kernel, Conv2dSpec spec, Rng& rng,
                          double gain) {
    Conv2d c;
    const double fan_in = static_cast<double>(in * kernel * kernel);
    c.weight = randn<T>({out, in, kernel, kernel}, gain / std::sqrt(fan_in), rng).set_requires_grad(true);
    c.bias = Tensor<T>(Shape{out}).set_requires_grad(true);
    c.spec = spec;
    return c;
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
Dense<T> Dense<T>::make(std::size_t in, std::size_t out, Rng& rng, double stddev) {
    Dense d;
    if (stddev < 0.0) stddev = 1.0 / std::sqrt(static_cast<double>(in));
    d.weight = randn<T>({in, out}, stddev, rng).set_requires_grad(true);
    d.bias = Tensor<T>(Shape{out}).set_requires_grad(true);
    return d;
}

template <typename T>
void Dense<T>::collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
LayerNorm<T> LayerNorm<T>::make(std::size_t dim) {
    LayerNorm ln;
    ln.gamma = Tensor<T>(Shape{dim}, T(1)).set_requires_grad(true);
    ln.beta = Tensor<T>(Shape{dim}).set_requires_grad(true);
    return ln;
}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

template Tensor<float> randn(Shape, double, Rng&);
template Tensor<double> randn(Shape, double, Rng&);
template std::vector<Tensor<float>> tensors_of(const ParamList<float>&);
template std::vector<Tensor<double>> tensors_of(const ParamList<double>&);
template void set_trainable(const ParamList<float>&, bool);
template void set_trainable(const ParamList<double>&, bool);
template void copy_param_values(const ParamList<float>&, const ParamList<float>&);
template void copy_param_values(const ParamList<double>&, const ParamList<float>&);
template void copy_param_values(const ParamList<float>&, const ParamList<double>&);
template void copy_param_values(const ParamList<double>&, const ParamList<double>&);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Dense<float>;
template struct Dense<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;

}  // namespace disco::nn
