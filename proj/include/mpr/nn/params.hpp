#pragma once

#include <map>
#include <string>

#include "mpr/common/rng.hpp"
#include "mpr/nn/tensor.hpp"

namespace mpr::nn {

// Named map of trainable tensors. Iteration order is the lexicographic name
// order, which fixes initialization and serialization order.
class ParameterSet {
public:
    TensorPtr add(const std::string& name, TensorPtr t);
    TensorPtr get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    const std::map<std::string, TensorPtr>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    void zero_grad();
    // Copies values from another set; names and shapes must match exactly.
    void load_values(const ParameterSet& src);
    std::int64_t value_count() const;

private:
    std::map<std::string, TensorPtr> params_;
};

// Initializers; all deterministic given the Rng state.
TensorPtr kaiming_normal(std::vector<int> shape, int fan_in, Rng& rng);
TensorPtr uniform_init(std::vector<int> shape, Real lo, Real hi, Rng& rng);
TensorPtr zeros_init(std::vector<int> shape);
TensorPtr full_init(std::vector<int> shape, Real value);

// Checkpoint: `{prefix}.json` manifest listing {name, shape, dtype,
// byte_offset} plus `{prefix}.bin`, one little-endian float32 blob. A
// round-trip through disk is bit-exact at 32-bit precision. `extra` is an
// opaque JSON string stored under "config" in the manifest.
void save_checkpoint(const std::string& prefix, const ParameterSet& params,
                     const std::string& extra_config_json = "");
struct LoadedCheckpoint {
    ParameterSet params;
    std::string config_json;
};
LoadedCheckpoint load_checkpoint(const std::string& prefix);

}  // namespace mpr::nn
