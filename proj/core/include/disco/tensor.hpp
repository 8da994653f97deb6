#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace disco::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Graph node owned by one or more Tensor handles. Inputs are held strongly so
/// that a loss keeps its whole graph alive until it is released.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void()> backward;

    std::vector<T>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Graph recording is enabled by default; inference code disables it with
/// NoGradGuard.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Dense row-major tensor with reverse-mode autodiff. Copies are shallow
/// handles onto the same node; use clone() for a deep copy.
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor();
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
    [[nodiscard]] std::size_t numel() const { return node_->value.size(); }

    [[nodiscard]] std::span<T> data() { return node_->value; }
    [[nodiscard]] std::span<const T> data() const { return node_->value; }
    [[nodiscard]] std::vector<T>& values() { return node_->value; }
    [[nodiscard]] const std::vector<T>& values() const { return node_->value; }
    [[nodiscard]] T item() const;
    [[nodiscard]] T operator[](std::size_t i) const { return node_->value[i]; }

    /// Gradient accumulator; empty until backward reaches this tensor.
    [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
    [[nodiscard]] std::vector<T>& grad_buffer() { return node_->ensure_grad(); }
    [[nodiscard]] bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    void zero_grad();

    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on);

    /// Reverse-mode sweep from a single-element tensor, seeding d(self)=1.
    void backward();

    /// Same values, cut from the graph (stop-gradient).
    [[nodiscard]] Tensor detach() const;
    [[nodiscard]] Tensor clone() const;

    /// Throws NumericError naming `where` if any value is NaN/Inf.
    void check_finite(const char* where) const;

    [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  private:
    std::shared_ptr<Node<T>> node_;
};

/// Creates an op output. When recording is on and any input requires grad,
/// the node is attached to the graph; `make_backward` is invoked with the
/// output node and must return the closure that propagates its gradient.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                         const std::function<std::function<void()>(Node<T>*)>& make_backward);

/// Adds `src` into the gradient buffer of `dst` if it requires grad.
template <typename T>
void accumulate_grad(Node<T>& dst, std::span<const T> src);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace disco::nn
