// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace geovid::nk {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

/// Receives the gradient of the node output and accumulates into parent
/// gradient buffers. A null buffer means that parent does not need a gradient.
using BackwardFn =
    std::function<void(const Node& self, std::span<const double> grad_out, std::span<std::vector<double>*> parent_grads)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<std::shared_ptr<const Node>> parents;
    BackwardFn backward;
};

/// Immutable n-dimensional array of doubles (row-major) that records the
/// operation that produced it. Copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> data);
    static Tensor parameter(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    /// Builds an op result. Throws NumericError if any value is not finite.
    static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const;
    /// Leading extent of the 2-D view (rank 0/1 tensors are a single row).
    std::size_t rows() const;
    /// Trailing extent of the 2-D view.
    std::size_t cols() const;

    std::span<const double> data() const;
    double item() const;
    double at(std::size_t row, std::size_t col) const { return data()[row * cols() + col]; }
    bool requires_grad() const;
    bool is_leaf() const;

    /// In-place access for leaf tensors (optimizer updates). Throws StateError
    /// for op results, which may participate in a recorded graph.
    std::span<double> mutable_data();

    /// Same values, no history, no gradient.
    Tensor detach() const;

    const Node* node() const { return node_.get(); }
    const std::shared_ptr<const Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
    // Leaves keep a mutable alias so optimizers can update values in place.
    std::shared_ptr<Node> leaf_;
};

/// Gradients of one backward pass, keyed by node. Independent passes over
/// graphs that share parameter leaves never touch shared state.
class Gradients {
public:
    bool has(const Tensor& t) const { return grads_.count(t.node()) != 0; }
    /// Gradient for t, or an all-zero vector when t did not influence the root.
    std::vector<double> of(const Tensor& t) const;
    std::span<const double> view(const Tensor& t) const;

private:
    friend Gradients backward(const Tensor& root);
    std::unordered_map<const Node*, std::vector<double>> grads_;
};

/// Reverse-mode sweep from a single-element root.
Gradients backward(const Tensor& root);

} // namespace geovid::nk
