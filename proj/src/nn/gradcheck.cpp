#include "mpr/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpr::nn {

Real grad_check(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& f,
                const std::vector<TensorPtr>& inputs, Real step) {
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->grad.clear();
    }
    auto loss = f(inputs);
    if (loss->numel() != 1) throw std::invalid_argument("grad_check needs a scalar function");
    loss->backward();

    Real worst = 0;
    for (const auto& in : inputs) {
        in->ensure_grad();
        for (std::size_t i = 0; i < in->data.size(); ++i) {
            const Real saved = in->data[i];
            in->data[i] = saved + step;
            const Real up = f(inputs)->item();
            in->data[i] = saved - step;
            const Real down = f(inputs)->item();
            in->data[i] = saved;

            const Real fd = (up - down) / (2 * step);
            const Real ad = in->grad[i];
            const Real denom = std::max({std::abs(ad), std::abs(fd), Real(1e-8)});
            worst = std::max(worst, std::abs(ad - fd) / denom);
        }
    }
    return worst;
}

}  // namespace mpr::nn
