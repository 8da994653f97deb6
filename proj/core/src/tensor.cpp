#include "disco/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

template <typename T>
Tensor<T>::Tensor() = default;

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node<T>>()) {
    for (auto d : shape) require(d > 0, "tensor extents must be positive, got " + shape_str(shape));
    node_->value.assign(nn::numel(shape), fill);
    node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    for (auto d : shape) require(d > 0, "tensor extents must be positive, got " + shape_str(shape));
    require(values.size() == nn::numel(shape),
            fmt::format("tensor data length {} does not match shape {}", values.size(), shape_str(shape)));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
    require(numel() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    auto node = std::make_shared<Node<T>>();
    node->shape = node_->shape;
    node->value = node_->value;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    auto t = detach();
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

template <typename T>
void Tensor<T>::check_finite(const char* where) const {
    for (std::size_t i = 0; i < node_->value.size(); ++i) {
        if (!std::isfinite(node_->value[i])) {
            throw NumericError(fmt::format("non-finite value {} at element {} of {} {}", node_->value[i], i,
                                           where, shape_str(node_->shape)));
        }
    }
}

template <typename T>
void Tensor<T>::backward() {
    require(numel() == 1, "backward() requires a scalar output, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // iterative post-order DFS to get a topological order
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && !node->grad.empty()) node->backward();
    }
    // interior gradients are scratch space; leaves keep theirs
    for (Node<T>* node : order) {
        if (!node->is_leaf) std::vector<T>().swap(node->grad);
    }
}

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                         const std::function<std::function<void()>(Node<T>*)>& make_backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->is_leaf = false;
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    }
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs)
            if (in.defined()) node->inputs.push_back(in.node());
        node->backward = make_backward(node.get());
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
void accumulate_grad(Node<T>& dst, std::span<const T> src) {
    if (!dst.requires_grad) return;
    auto& g = dst.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                      const std::function<std::function<void()>(Node<float>*)>&);
template Tensor<double> make_op_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                       const std::function<std::function<void()>(Node<double>*)>&);
template void accumulate_grad(Node<float>&, std::span<const float>);
template void accumulate_grad(Node<double>&, std::span<const double>);

}  // namespace disco::nn
