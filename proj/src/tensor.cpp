#include "postdae/tensor.hpp"

#include "postdae/error.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <unordered_set>

namespace postdae::ad {

namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

bool grad_enabled()
{
    return t_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled)
{
    t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard()
{
    t_grad_enabled = previous_;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
{
    if (numel(shape) != data.size()) {
        throw ContractError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                            shape_string(shape));
    }
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad)
{
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
    return Tensor({1}, {value}, requires_grad);
}

double Tensor::item() const
{
    if (size() != 1) {
        throw ContractError("item() on a tensor with " + std::to_string(size()) + " elements");
    }
    return node_->data[0];
}

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                       std::function<void(Node&)> backward)
{
    Tensor out(std::move(shape), std::move(data), false);
    if (!t_grad_enabled) {
        return out;
    }
    const bool needs = std::any_of(parents.begin(), parents.end(),
                                   [](const Tensor& p) { return p.defined() && p.requires_grad(); });
    if (!needs) {
        return out;
    }
    out.node_->requires_grad = true;
    for (auto& p : parents) {
        out.node_->parents.push_back(p.node_);
    }
    out.node_->backward = std::move(backward);
    return out;
}

void Tensor::backward() const
{
    if (size() != 1) {
        throw ContractError("backward() requires a scalar, got shape " + shape_string(shape()));
    }
    if (!requires_grad()) {
        return;
    }
    // iterative post-order DFS gives a topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p && p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (n->backward) {
            // interior node: fresh gradient buffer for this pass
            n->grad.assign(n->data.size(), 0.0);
        } else if (n->grad.size() != n->data.size()) {
            n->grad.assign(n->data.size(), 0.0);
        }
    }
    node_->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) {
            (*it)->backward(**it);
        }
    }
}

void Tensor::zero_grad()
{
    node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const
{
    return Tensor(node_->shape, node_->data, false);
}

} // namespace postdae::ad
