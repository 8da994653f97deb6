#include "disco/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco::nn {

template <typename T>
void adam_step(std::vector<std::vector<T>*> params, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state) {
    require(params.size() == grads.size(), "adam_step: params and grads lists differ in length");
    if (state.first_moment.empty()) {
        for (auto* p : params) {
            state.first_moment.emplace_back(p->size(), T(0));
            state.second_moment.emplace_back(p->size(), T(0));
        }
    }
    require(state.first_moment.size() == params.size(), "adam_step: moment count does not match params");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->size() != grads[i]->size() || state.first_moment[i].size() != params[i]->size())
            throw ContractError(fmt::format("adam_step: shape mismatch for parameter {}", i));
        for (T g : *grads[i])
            if (!std::isfinite(g)) throw NumericError(fmt::format("adam_step: non-finite gradient in parameter {}", i));
    }

    const auto& hp = state.hyper;
    const std::uint64_t t = state.step_count + 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    const T lr = static_cast<T>(hp.learning_rate), eps = static_cast<T>(hp.epsilon);
    const T c1 = static_cast<T>(1.0 / bc1), c2 = static_cast<T>(1.0 / bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = *grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            if (lr != T(0)) p[j] -= lr * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
        }
    }
    state.step_count = t;
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamHyper hyper) : params_(std::move(params)) {
    state_.hyper = hyper;
}

template <typename T>
void Adam<T>::step() {
    std::vector<std::vector<T>*> ps;
    std::vector<const std::vector<T>*> gs;
    ps.reserve(params_.size());
    gs.reserve(params_.size());
    for (auto& p : params_) {
        ps.push_back(&p.values());
        gs.push_back(&p.grad_buffer());
    }
    adam_step(std::move(ps), gs, state_);
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template void adam_step(std::vector<std::vector<float>*>, const std::vector<const std::vector<float>*>&,
                        AdamState<float>&);
template void adam_step(std::vector<std::vector<double>*>, const std::vector<const std::vector<double>*>&,
                        AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace disco::nn
