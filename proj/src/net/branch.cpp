#include "mpr/net/branch.hpp"

#include <cmath>
#include <stdexcept>

namespace mpr::net {

using nn::TensorPtr;

BranchEncoder BranchEncoder::make(ParamBinder& pb, const std::string& prefix, BranchConfig cfg) {
    if (cfg.stages.empty()) throw std::invalid_argument("branch needs at least one stage");
    BranchEncoder enc;
    enc.cfg = cfg;
    int cin = cfg.in_channels;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& st = cfg.stages[i];
        enc.blocks.push_back(ResBlock::make(pb, prefix + ".block" + std::to_string(i), cin,
                                            st.out_channels, st.stride_h, st.stride_w,
                                            nn::PadMode::kAzimuthCircular));
        cin = st.out_channels;
    }
    enc.posenc = pb.zeros(prefix + ".posenc", {cfg.c_feat(), kFeatRows, kFeatCols});
    return enc;
}

TensorPtr BranchEncoder::forward(const TensorPtr& bev, bool add_posenc) const {
    if (bev->rank() != 3 || bev->dim(0) != cfg.in_channels)
        throw std::invalid_argument("branch input channel mismatch: got " +
                                    nn::shape_str(bev->shape) + ", expected C=" +
                                    std::to_string(cfg.in_channels));
    auto x = bev;
    for (const auto& block : blocks) x = block.forward(x);
    x = nn::adaptive_avg_pool2d(x, kFeatRows, kFeatCols);
    return add_posenc ? nn::add(x, posenc) : x;
}

Aggregator aggregator_from_string(const std::string& s) {
    if (s == "netvlad") return Aggregator::kNetVlad;
    if (s == "gap") return Aggregator::kGap;
    if (s == "gmp") return Aggregator::kGmp;
    if (s == "gem") return Aggregator::kGem;
    throw std::invalid_argument("unknown aggregator: " + s);
}

std::string aggregator_to_string(Aggregator a) {
    switch (a) {
        case Aggregator::kNetVlad: return "netvlad";
        case Aggregator::kGap: return "gap";
        case Aggregator::kGmp: return "gmp";
        case Aggregator::kGem: return "gem";
    }
    return "netvlad";
}

NetVladParams NetVladParams::make(ParamBinder& pb, const std::string& prefix, int c, int k,
                                  int d) {
    NetVladParams p;
    p.assign_w = pb.kaiming(prefix + ".assign_w", {c, k}, c);
    p.assign_b = pb.zeros(prefix + ".assign_b", {k});
    p.centers = pb.normal(prefix + ".centers", {k, c}, 1.0 / std::sqrt(double(c)));
    p.proj_w = pb.kaiming(prefix + ".proj_w", {k * c, d}, k * c);
    p.proj_b = pb.zeros(prefix + ".proj_b", {d});
    return p;
}

TensorPtr netvlad(const TensorPtr& features, const NetVladParams& p) {
    if (features->rank() != 2) throw std::invalid_argument("netvlad expects [N,C] features");
    const int k = p.centers->dim(0);
    const int c = p.centers->dim(1);
    auto assign = nn::softmax(nn::linear(features, p.assign_w, p.assign_b));  // [N,K]
    // V_k = sum_i a_ki (x_i - c_k) = (A^T X)_k - (sum_i a_ki) c_k
    auto weighted = nn::matmul(nn::transpose(assign), features);  // [K,C]
    auto mass = nn::sum_rows(assign);                             // [K]
    auto v = nn::sub(weighted, nn::mul_col(p.centers, mass));
    v = nn::l2_normalize_rows(v);  // intra-normalization
    auto flat = nn::reshape(v, {1, k * c});
    auto proj = nn::linear(flat, p.proj_w, p.proj_b);
    return nn::l2_normalize(nn::reshape(proj, {p.proj_b->dim(0)}));
}

AggregatorHead AggregatorHead::make(ParamBinder& pb, const std::string& prefix, Aggregator mode,
                                    int c, int k_clusters, int d) {
    AggregatorHead h;
    h.mode = mode;
    if (mode == Aggregator::kNetVlad) {
        h.vlad = NetVladParams::make(pb, prefix + ".vlad", c, k_clusters, d);
    } else {
        h.proj_w = pb.kaiming(prefix + ".proj_w", {c, d}, c);
        h.proj_b = pb.zeros(prefix + ".proj_b", {d});
        if (mode == Aggregator::kGem) h.gem_p = pb.constant(prefix + ".gem_p", {1}, 3.0);
    }
    return h;
}

TensorPtr AggregatorHead::descriptor(const TensorPtr& features) const {
    if (mode == Aggregator::kNetVlad) return netvlad(features, vlad);

    TensorPtr pooled;
    switch (mode) {
        case Aggregator::kGap:
            pooled = nn::mean_rows(features);
            break;
        case Aggregator::kGmp:
            pooled = nn::max_rows(features);
            break;
        case Aggregator::kGem: {
            // (mean of x^p)^(1/p) on positively clamped features.
            auto clamped = nn::clamp_min(features, 1e-6);
            auto powered = nn::pow(clamped, gem_p);
            auto mean = nn::clamp_min(nn::mean_rows(powered), 1e-12);
            auto inv_p = nn::div(nn::Tensor::scalar(1.0), gem_p);
            pooled = nn::pow(mean, inv_p);
            break;
        }
        default:
            throw std::invalid_argument("unknown aggregator mode");
    }
    auto proj = nn::linear(nn::reshape(pooled, {1, pooled->dim(0)}), proj_w, proj_b);
    return nn::l2_normalize(nn::reshape(proj, {proj_b->dim(0)}));
}

TensorPtr flatten_featmap(const TensorPtr& fm) {
    if (fm->rank() != 3) throw std::invalid_argument("flatten_featmap expects [C,H,W]");
    const int c = fm->dim(0), h = fm->dim(1), w = fm->dim(2);
    return nn::transpose(nn::reshape(fm, {c, h * w}));
}

}  // namespace mpr::net
