#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace fan {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct Node;

// Per-backward-call adjoint buffers. Fresh on every backward() so repeated
// calls accumulate exact multiples into the persistent grad buffers.
using Adjoints = std::unordered_map<const Node*, std::vector<double>>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // persistent; empty until backward touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's adjoint to its parents' adjoint buffers.
    std::function<void(const std::vector<double>& out_adj, Adjoints& adj)> backward;

    int64_t numel() const { return shape_numel(shape); }
};

std::vector<double>& adjoint_of(Adjoints& adj, const Node* n);

}  // namespace detail

// Thread-local switch; when disabled, ops record no graph (pure evaluation).
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense row-major float64 tensor with optional gradient tracking. Copying a
// Tensor copies the handle, not the storage; independently built graphs share
// nothing and may live on different threads.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node != nullptr; }
    const Shape& shape() const { return node->shape; }
    int rank() const { return static_cast<int>(node->shape.size()); }
    int dim(int i) const { return node->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return node->numel(); }

    std::vector<double>& vec() { return node->data; }
    const std::vector<double>& vec() const { return node->data; }
    double* data() { return node->data.data(); }
    const double* data() const { return node->data.data(); }

    bool requires_grad() const { return node->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return node && !node->grad.empty(); }
    // Gradient buffer, zero-filled on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad_view() const;
    void zero_grad();

    // Scalar value of a 1-element tensor.
    double item() const;

    bool all_finite() const;

    // Reverse-mode sweep from a scalar. Every requires_grad tensor reachable
    // through the recorded operations receives its gradient, accumulating
    // across repeated calls.
    void backward() const;

    std::shared_ptr<detail::Node> node;

    explicit Tensor(std::shared_ptr<detail::Node> n) : node(std::move(n)) {}
};

// Detached copy of the forward values (no graph, no grad).
Tensor detach(const Tensor& t);

}  // namespace fan
