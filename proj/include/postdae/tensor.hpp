#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace postdae::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Graph node. Parents are kept alive by their children until the graph is
/// released; the backward closure reads `grad` and accumulates into parents.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
};

/// Dense row-major double tensor with reverse-mode differentiation.
/// Copies are shallow handles to the same node.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    /// Empty until a backward pass reaches this tensor.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    double item() const;

    /// Accumulates d(this)/d(leaf) into every reachable leaf's grad.
    /// `this` must be a scalar.
    void backward() const;
    void zero_grad();
    /// Same values, no history.
    Tensor detach() const;

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Builds an op result; history is attached only when grad mode is on and
    /// some parent requires grad.
    static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<void(Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph construction in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

} // namespace postdae::ad
