#include "mpr/nn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mpr::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) ss << ",";
        ss << shape[i];
    }
    ss << "]";
    return ss.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(shape_numel(t->shape)), Real(0));
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<Real> values, bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    if (values.size() != t->data.size()) {
        throw std::invalid_argument("value count does not match shape " + shape_str(t->shape));
    }
    t->data = std::move(values);
    return t;
}

TensorPtr Tensor::scalar(Real value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Real Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), Real(0));
}

void Tensor::accumulate_grad(const std::vector<Real>& g) {
    if (g.size() != data.size()) throw std::invalid_argument("gradient size mismatch");
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void Tensor::backward() {
    if (numel() != 1) throw std::invalid_argument("backward() requires a scalar loss tensor");

    // Iterative post-order DFS for a topological order.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> visited;
    struct Frame {
        Tensor* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({this, 0});
    visited.insert(this);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    ensure_grad();
    grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

}  // namespace mpr::nn
