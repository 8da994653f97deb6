#pragma once

#include <cstdint>
#include <vector>

#include "disco/tensor.hpp"

namespace disco::nn {

struct AdamHyper {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::uint64_t step_count = 0;
    AdamHyper hyper;
};

/// One bias-corrected Adam update applied elementwise. `params[i]` and
/// `grads[i]` must have equal lengths; moments are created on first use.
template <typename T>
void adam_step(std::vector<std::vector<T>*> params, const std::vector<const std::vector<T>*>& grads,
               AdamState<T>& state);

/// Adam over a fixed list of parameter tensors. Parameters that received no
/// gradient in this step are treated as having zero gradient.
template <typename T>
class Adam {
  public:
    Adam(std::vector<Tensor<T>> params, AdamHyper hyper);

    void step();
    void zero_grad();

    [[nodiscard]] const AdamState<T>& state() const { return state_; }
    [[nodiscard]] AdamState<T>& state() { return state_; }
    [[nodiscard]] const std::vector<Tensor<T>>& params() const { return params_; }

  private:
    std::vector<Tensor<T>> params_;
    AdamState<T> state_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace disco::nn
