#include "mpr/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpr::nn {

void Adam::step(ParameterSet& params, Real lr) {
    if (lr <= 0) throw std::invalid_argument("learning rate must be positive");
    ++t_;
    const Real bc1 = Real(1) - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = Real(1) - std::pow(beta2_, static_cast<Real>(t_));

    for (auto& [name, p] : params.all()) {
        if (p->grad.empty()) continue;
        const bool any = std::any_of(p->grad.begin(), p->grad.end(),
                                     [](Real g) { return g != Real(0); });
        if (!any) continue;  // untouched parameters stay put, moments included

        auto& mom = state_[name];
        if (mom.m.size() != p->data.size()) {
            mom.m.assign(p->data.size(), Real(0));
            mom.v.assign(p->data.size(), Real(0));
        }
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const Real g = p->grad[i];
            mom.m[i] = beta1_ * mom.m[i] + (Real(1) - beta1_) * g;
            mom.v[i] = beta2_ * mom.v[i] + (Real(1) - beta2_) * g * g;
            const Real mhat = mom.m[i] / bc1;
            const Real vhat = mom.v[i] / bc2;
            p->data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace mpr::nn
