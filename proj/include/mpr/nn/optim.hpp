#pragma once

#include <map>
#include <string>
#include <vector>

#include "mpr/nn/params.hpp"

namespace mpr::nn {

// Adam with bias correction. State is keyed by parameter name so a
// checkpoint reload keeps moments aligned with their tensors.
class Adam {
public:
    explicit Adam(Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update using each parameter's accumulated .grad; skips
    // parameters whose grad buffer was never touched. Zero gradients leave
    // values unchanged (moments still decay).
    void step(ParameterSet& params, Real lr);

    std::int64_t step_count() const { return t_; }

private:
    struct Moments {
        std::vector<Real> m, v;
    };
    std::map<std::string, Moments> state_;
    Real beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

}  // namespace mpr::nn
