#include "fan/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "fan/error.hpp"

namespace fan {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

namespace detail {

std::vector<double>& adjoint_of(Adjoints& adj, const Node* n) {
    auto it = adj.find(n);
    if (it == adj.end()) {
        it = adj.emplace(n, std::vector<double>(static_cast<size_t>(n->numel()), 0.0)).first;
    }
    return it->second;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = shape;
    n->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    for (auto& v : t.vec()) v = value;
    return t;
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    Tensor t = zeros(shape, requires_grad);
    t.node->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

std::vector<double>& Tensor::grad() {
    if (node->grad.empty()) node->grad.assign(static_cast<size_t>(numel()), 0.0);
    return node->grad;
}

const std::vector<double>& Tensor::grad_view() const {
    if (node->grad.empty()) {
        throw ContractError("tensor has no gradient; call backward() first");
    }
    return node->grad;
}

void Tensor::zero_grad() {
    if (!node->grad.empty()) node->grad.assign(node->grad.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() requires a 1-element tensor, got shape " + shape_str(shape()));
    }
    return node->data[0];
}

bool Tensor::all_finite() const {
    for (double v : node->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::backward() const {
    if (!node) throw ContractError("backward() on an undefined tensor");
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
    }

    // Replay record: topological order with producers before consumers,
    // rebuilt from the graph reachable from the loss (iterative DFS).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node.get(), 0});
    visited.insert(node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            detail::Node* p = f.n->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    detail::Adjoints adj;
    adj.reserve(order.size());
    adj[node.get()] = {1.0};

    // Consumers first: iterate the record in reverse.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward) continue;
        auto found = adj.find(n);
        if (found == adj.end()) continue;  // no path from the loss
        n->backward(found->second, adj);
    }

    for (detail::Node* n : order) {
        if (!n->requires_grad) continue;
        auto found = adj.find(n);
        if (found == adj.end()) continue;
        if (n->grad.empty()) n->grad.assign(static_cast<size_t>(n->numel()), 0.0);
        const auto& a = found->second;
        for (size_t i = 0; i < a.size(); ++i) n->grad[i] += a[i];
    }
}

Tensor detach(const Tensor& t) {
    return Tensor::from_data(t.shape(), t.vec(), false);
}

}  // namespace fan
