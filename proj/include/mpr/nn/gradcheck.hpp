#pragma once

#include <functional>
#include <vector>

#include "mpr/nn/tensor.hpp"

namespace mpr::nn {

// Compares reverse-mode gradients against central differences (step 1e-5)
// for a scalar-valued function of the given inputs. Returns the maximum over
// all input entries of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
//
// The function must rebuild its graph on every call: it is invoked once for
// the analytic gradient and twice per perturbed entry.
Real grad_check(const std::function<TensorPtr(const std::vector<TensorPtr>&)>& f,
                const std::vector<TensorPtr>& inputs, Real step = 1e-5);

}  // namespace mpr::nn
