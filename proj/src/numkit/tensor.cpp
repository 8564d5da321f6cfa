// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "geovid/errors.hpp"

namespace geovid::nk {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t n) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != n) {
        throw ShapeError("data length " + std::to_string(n) + " does not match shape " + shape_str(shape));
    }
}

} // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
    check_shape(shape, data.size());
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    Tensor t(node);
    t.leaf_ = node;
    return t;
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    Tensor t = constant(std::move(shape), std::move(data));
    t.leaf_->requires_grad = true;
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return requires_grad ? parameter(std::move(shape), std::move(data)) : constant(std::move(shape), std::move(data));
}

Tensor Tensor::full(Shape shape, double value) {
    std::vector<double> data(shape_numel(shape), value);
    return constant(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents, BackwardFn backward) {
    check_shape(shape, data.size());
    for (double v : data) {
        if (!std::isfinite(v)) throw NumericError("non-finite value produced by tensor op");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node_ptr());
        node->backward = std::move(backward);
    }
    return Tensor(std::shared_ptr<Node>(node));
}

const Shape& Tensor::shape() const {
    if (!node_) throw StateError("undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() >= 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    if (s.empty()) return 1;
    if (s.size() == 1) return s[0];
    return shape_numel(s) / s[0];
}

std::span<const double> Tensor::data() const {
    if (!node_) throw StateError("undefined tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return leaf_ != nullptr; }

std::span<double> Tensor::mutable_data() {
    if (!leaf_) throw StateError("only leaf tensors may be mutated in place");
    return leaf_->data;
}

Tensor Tensor::detach() const { return constant(shape(), std::vector<double>(data().begin(), data().end())); }

std::vector<double> Gradients::of(const Tensor& t) const {
    auto it = grads_.find(t.node());
    if (it == grads_.end()) return std::vector<double>(t.numel(), 0.0);
    return it->second;
}

std::span<const double> Gradients::view(const Tensor& t) const {
    auto it = grads_.find(t.node());
    if (it == grads_.end()) return {};
    return it->second;
}

Gradients backward(const Tensor& root) {
    if (root.numel() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(root.shape()));
    Gradients out;
    if (!root.requires_grad()) return out;

    // Iterative post-order DFS over nodes that need gradients.
    std::vector<const Node*> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<const Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto& grads = out.grads_;
    grads[root.node()] = {1.0};
    std::vector<std::vector<double>*> pgrads;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node* node = *it;
        auto git = grads.find(node);
        if (git == grads.end()) continue;
        if (!node->parents.empty()) {
            pgrads.assign(node->parents.size(), nullptr);
            for (std::size_t i = 0; i < node->parents.size(); ++i) {
                const Node* p = node->parents[i].get();
                if (!p->requires_grad) continue;
                auto& g = grads[p];
                if (g.empty()) g.assign(p->data.size(), 0.0);
                pgrads[i] = &g;
            }
            // Re-find: inserting parents may have rehashed the map.
            const auto& gout = grads.find(node)->second;
            node->backward(*node, gout, pgrads);
            grads.erase(node);
        }
    }
    return out;
}

} // namespace geovid::nk
