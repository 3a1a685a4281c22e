#pragma once

#include <array>
#include <optional>

#include "mpr/net/branch.hpp"

namespace mpr::net {

// Modality slot order is fixed everywhere: camera, lidar, radar, fusion.
enum Modality { kCamera = 0, kLidar = 1, kRadar = 2 };
inline constexpr int kNumModalities = 3;
inline constexpr const char* kModalityNames[kNumModalities] = {"camera", "lidar", "radar"};

struct PresenceMask {
    bool camera = false, lidar = false, radar = false;

    bool has(int modality) const {
        return modality == kCamera ? camera : modality == kLidar ? lidar : radar;
    }
    int count() const { return int(camera) + int(lidar) + int(radar); }
    bool any() const { return count() > 0; }
};

struct FusionConfig {
    int c_feat = 64;
    int d_conn = 64;
    int connector_hidden = 64;
    int experts = 4;
    int top_k = 2;
    int layers = 2;
    int heads = 4;
    int expert_hidden = 128;
    int k_clusters = 16;
    int descriptor_dim = 256;
    bool renormalize_topk = false;  // Eq.-literal top-k keeps raw softmax weights

    int tokens() const { return kFeatRows * kFeatCols; }
    int c_tok() const { return kNumModalities * d_conn; }
};

// Per-batch expert utilization accumulators; both stay in the autodiff graph
// so the load-balance loss trains the router.
struct RouterState {
    nn::TensorPtr importance;  // [E] sum of kept gate weights
    nn::TensorPtr load;        // [E] sum of pre-top-k selection probabilities
    int expert_count = 0;
    int top_k = 0;

    void reset(int experts, int k);
    void accumulate(const nn::TensorPtr& kept_weights, const nn::TensorPtr& probs);
};

struct ExpertParams {
    nn::TensorPtr w1, b1, w2, b2;
};

struct EncoderLayerParams {
    nn::MhaParams mha;
    nn::TensorPtr ln1_g, ln1_b, ln2_g, ln2_b;
    nn::TensorPtr router_w, router_b;
    std::vector<ExpertParams> experts;
};

struct FusionParams {
    FusionConfig cfg;
    std::array<Mlp, kNumModalities> connectors;
    std::array<nn::TensorPtr, kNumModalities> bank;  // learnable imputation, [T, d_conn] each
    std::vector<EncoderLayerParams> layers;
    NetVladParams vlad;

    static FusionParams make(ParamBinder& pb, const std::string& prefix, FusionConfig cfg);
};

// Connects present modality feature maps ([C_feat,29,7] each, flattened and
// run through per-modality MLP connectors) and substitutes the imputation
// bank verbatim for absent ones; concatenates per position to [T, 3*d_conn].
nn::TensorPtr tokenize_and_connect(
    const std::array<std::optional<nn::TensorPtr>, kNumModalities>& featmaps,
    const PresenceMask& mask, const FusionParams& params);

// Sparse MoE sublayer: per token softmax router, top-k mask (no
// renormalization unless configured), weighted sum of the selected expert
// MLPs. Accumulates router statistics into `state`.
nn::TensorPtr moe_layer(const nn::TensorPtr& tokens, const EncoderLayerParams& layer,
                        const FusionConfig& cfg, RouterState& state);

// L pre-norm encoder layers (attention + MoE, residuals) then NetVLAD over
// output tokens -> unit-norm fusion descriptor.
nn::TensorPtr fusion_forward(const nn::TensorPtr& tokens, const FusionParams& params,
                             RouterState& state);

// [D_C|0, D_P|0, D_R|0, D_F] concatenation, then whole-vector L2 norm.
nn::TensorPtr assemble_descriptor(
    const std::array<std::optional<nn::TensorPtr>, kNumModalities>& branch_descriptors,
    const nn::TensorPtr& fusion_descriptor, const PresenceMask& mask);

}  // namespace mpr::net
