#pragma once

#include "mpr/net/blocks.hpp"

namespace mpr::net {

// All three modality branches emit feature maps on this common resolution;
// the fusion tokenizer depends on it.
inline constexpr int kFeatRows = 29;
inline constexpr int kFeatCols = 7;

struct BranchStage {
    int out_channels = 0;
    int stride_h = 1;
    int stride_w = 1;
};

struct BranchConfig {
    int in_channels = 1;
    std::vector<BranchStage> stages;
    int c_feat() const { return stages.back().out_channels; }
};

// Strided ResBlock stages with azimuth-circular padding, adaptive average
// pooling to 29x7, then an additive learnable positional encoding
// (zero-initialized).
struct BranchEncoder {
    BranchConfig cfg;
    std::vector<ResBlock> blocks;
    nn::TensorPtr posenc;  // [C_feat, 29, 7]

    static BranchEncoder make(ParamBinder& pb, const std::string& prefix, BranchConfig cfg);
    // add_posenc=false exposes the pre-encoding features for equivariance checks.
    nn::TensorPtr forward(const nn::TensorPtr& bev, bool add_posenc = true) const;
};

enum class Aggregator { kNetVlad, kGap, kGmp, kGem };

Aggregator aggregator_from_string(const std::string& s);
std::string aggregator_to_string(Aggregator a);

struct NetVladParams {
    nn::TensorPtr assign_w;  // [C, K]
    nn::TensorPtr assign_b;  // [K]
    nn::TensorPtr centers;   // [K, C]
    nn::TensorPtr proj_w;    // [K*C, D]
    nn::TensorPtr proj_b;    // [D]

    static NetVladParams make(ParamBinder& pb, const std::string& prefix, int c, int k, int d);
};

// Soft-assign, residual aggregation, intra-normalization, projection to D,
// final L2 normalization.
nn::TensorPtr netvlad(const nn::TensorPtr& features, const NetVladParams& p);

// One aggregation head per branch; gap/gmp/gem share a plain projection.
struct AggregatorHead {
    Aggregator mode = Aggregator::kNetVlad;
    NetVladParams vlad;
    nn::TensorPtr proj_w, proj_b;  // [C, D], [D] for the pooling modes
    nn::TensorPtr gem_p;           // learnable exponent, init 3

    static AggregatorHead make(ParamBinder& pb, const std::string& prefix, Aggregator mode, int c,
                               int k_clusters, int d);
    // features: [N, C] flattened spatial positions.
    nn::TensorPtr descriptor(const nn::TensorPtr& features) const;
};

// [C, H, W] feature map -> [H*W, C] token/feature rows.
nn::TensorPtr flatten_featmap(const nn::TensorPtr& fm);

}  // namespace mpr::net
