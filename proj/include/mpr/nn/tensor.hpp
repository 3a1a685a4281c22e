#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mpr::nn {

// Training and verification math runs in 64-bit; checkpoints, descriptors
// and all on-disk blobs are 32-bit.
using Real = double;

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense n-d array participating in a dynamically built reverse-mode graph.
// Ops allocate fresh output tensors and, when gradients are enabled and any
// input requires them, attach a closure that routes the output's gradient
// into the parents' accumulators.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<int> shape;
    std::vector<Real> data;
    bool requires_grad = false;
    std::vector<Real> grad;  // same size as data once touched by backward()

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;  // reads this->grad, accumulates into parents

    static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr from_data(std::vector<int> shape, std::vector<Real> values,
                               bool requires_grad = false);
    static TensorPtr scalar(Real value, bool requires_grad = false);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int axis) const { return shape[static_cast<std::size_t>(axis)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    Real item() const;

    void ensure_grad();
    void zero_grad();
    void accumulate_grad(const std::vector<Real>& g);

    // Reverse-mode sweep from this tensor, which must be scalar-sized.
    // Gradients accumulate into every reachable tensor with requires_grad
    // or with graph parents; leaf grads persist until zero_grad().
    void backward();

    bool is_leaf() const { return parents.empty(); }
};

// Thread-local switch; inference paths wrap themselves in NoGradGuard so no
// graph is recorded.
class GradMode {
public:
    static bool enabled();
    static void set(bool on);
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace mpr::nn
