#pragma once

#include <optional>
#include <string>

#include "mpr/common/rng.hpp"
#include "mpr/nn/ops.hpp"
#include "mpr/nn/params.hpp"

namespace mpr::net {

// Creates-and-registers parameters on first build, or rebinds existing ones
// when reconstructing a model from a checkpoint. Module constructors go
// through this so init and load share one wiring path.
class ParamBinder {
public:
    enum class Mode { kInit, kLoad };

    ParamBinder(nn::ParameterSet& ps, Rng* rng, Mode mode) : ps_(ps), rng_(rng), mode_(mode) {}

    nn::TensorPtr kaiming(const std::string& name, std::vector<int> shape, int fan_in);
    nn::TensorPtr normal(const std::string& name, std::vector<int> shape, nn::Real stddev);
    nn::TensorPtr zeros(const std::string& name, std::vector<int> shape);
    nn::TensorPtr constant(const std::string& name, std::vector<int> shape, nn::Real value);

private:
    nn::TensorPtr bind(const std::string& name, std::vector<int> shape, nn::TensorPtr fresh);
    nn::ParameterSet& ps_;
    Rng* rng_;
    Mode mode_;
};

struct Conv2dLayer {
    nn::TensorPtr w, b;
    int stride_h = 1, stride_w = 1;
    nn::PadMode pad = nn::PadMode::kAzimuthCircular;

    static Conv2dLayer make(ParamBinder& pb, const std::string& prefix, int cin, int cout, int kh,
                            int kw, int sh, int sw, nn::PadMode pad);
    nn::TensorPtr forward(const nn::TensorPtr& x) const;
};

// Normalization-free residual block: relu(skip(x) + gain * conv2(relu(conv1(x)))).
// The learnable scalar gain (init 0.5) keeps batch-size-1 determinism without
// any running statistics.
struct ResBlock {
    Conv2dLayer conv1, conv2;
    std::optional<Conv2dLayer> proj;  // 1x1 when channels or stride change
    nn::TensorPtr gain;

    static ResBlock make(ParamBinder& pb, const std::string& prefix, int cin, int cout, int sh,
                         int sw, nn::PadMode pad);
    nn::TensorPtr forward(const nn::TensorPtr& x) const;
};

// Two-layer perceptron, relu after the hidden layer only.
struct Mlp {
    nn::TensorPtr w1, b1, w2, b2;

    static Mlp make(ParamBinder& pb, const std::string& prefix, int in, int hidden, int out);
    nn::TensorPtr forward(const nn::TensorPtr& x) const;
};

}  // namespace mpr::net
