#include "mpr/net/blocks.hpp"

#include <stdexcept>

namespace mpr::net {

using nn::TensorPtr;

TensorPtr ParamBinder::bind(const std::string& name, std::vector<int> shape, TensorPtr fresh) {
    if (mode_ == Mode::kLoad) {
        auto t = ps_.get(name);
        if (t->shape != shape)
            throw std::runtime_error("checkpoint tensor " + name + " has shape " +
                                     nn::shape_str(t->shape) + ", expected " +
                                     nn::shape_str(shape));
        return t;
    }
    return ps_.add(name, std::move(fresh));
}

TensorPtr ParamBinder::kaiming(const std::string& name, std::vector<int> shape, int fan_in) {
    return bind(name, shape,
                mode_ == Mode::kInit ? nn::kaiming_normal(shape, fan_in, *rng_) : nullptr);
}

TensorPtr ParamBinder::normal(const std::string& name, std::vector<int> shape, nn::Real stddev) {
    TensorPtr fresh;
    if (mode_ == Mode::kInit) {
        fresh = nn::Tensor::create(shape);
        for (auto& v : fresh->data) v = rng_->normal() * stddev;
    }
    return bind(name, shape, std::move(fresh));
}

TensorPtr ParamBinder::zeros(const std::string& name, std::vector<int> shape) {
    return bind(name, shape, mode_ == Mode::kInit ? nn::zeros_init(shape) : nullptr);
}

TensorPtr ParamBinder::constant(const std::string& name, std::vector<int> shape, nn::Real value) {
    return bind(name, shape, mode_ == Mode::kInit ? nn::full_init(shape, value) : nullptr);
}

Conv2dLayer Conv2dLayer::make(ParamBinder& pb, const std::string& prefix, int cin, int cout,
                              int kh, int kw, int sh, int sw, nn::PadMode pad) {
    Conv2dLayer l;
    l.w = pb.kaiming(prefix + ".w", {cout, cin, kh, kw}, cin * kh * kw);
    l.b = pb.zeros(prefix + ".b", {cout});
    l.stride_h = sh;
    l.stride_w = sw;
    l.pad = pad;
    return l;
}

TensorPtr Conv2dLayer::forward(const TensorPtr& x) const {
    return nn::conv2d(x, w, b, stride_h, stride_w, pad);
}

ResBlock ResBlock::make(ParamBinder& pb, const std::string& prefix, int cin, int cout, int sh,
                        int sw, nn::PadMode pad) {
    ResBlock b;
    b.conv1 = Conv2dLayer::make(pb, prefix + ".conv1", cin, cout, 3, 3, sh, sw, pad);
    b.conv2 = Conv2dLayer::make(pb, prefix + ".conv2", cout, cout, 3, 3, 1, 1, pad);
    if (cin != cout || sh != 1 || sw != 1) {
        b.proj = Conv2dLayer::make(pb, prefix + ".proj", cin, cout, 1, 1, sh, sw, pad);
    }
    b.gain = pb.constant(prefix + ".gain", {1}, 0.5);
    return b;
}

TensorPtr ResBlock::forward(const TensorPtr& x) const {
    auto main = conv2.forward(nn::relu(conv1.forward(x)));
    auto skip = proj ? proj->forward(x) : x;
    return nn::relu(nn::add(skip, nn::scale_t(main, gain)));
}

Mlp Mlp::make(ParamBinder& pb, const std::string& prefix, int in, int hidden, int out) {
    Mlp m;
    m.w1 = pb.kaiming(prefix + ".w1", {in, hidden}, in);
    m.b1 = pb.zeros(prefix + ".b1", {hidden});
    m.w2 = pb.kaiming(prefix + ".w2", {hidden, out}, hidden);
    m.b2 = pb.zeros(prefix + ".b2", {out});
    return m;
}

TensorPtr Mlp::forward(const TensorPtr& x) const {
    return nn::linear(nn::relu(nn::linear(x, w1, b1)), w2, b2);
}

}  // namespace mpr::net
