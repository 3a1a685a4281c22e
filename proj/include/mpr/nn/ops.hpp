#pragma once

#include "mpr/nn/tensor.hpp"

namespace mpr::nn {

enum class PadMode {
    kZero,
    // Wraps the last (azimuth) axis cyclically and zero-pads the range axis;
    // keeps convolution equivariant to the rotation -> column-shift property
    // of polar BEVs.
    kAzimuthCircular,
};

// ---- elementwise ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);  // b same shape or scalar [1]
TensorPtr scale(const TensorPtr& a, Real s);
TensorPtr scale_t(const TensorPtr& a, const TensorPtr& s);  // s is a learnable scalar [1]
TensorPtr add_scalar(const TensorPtr& a, Real c);
TensorPtr relu(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr exp(const TensorPtr& a);
TensorPtr log(const TensorPtr& a);
TensorPtr sqrt(const TensorPtr& a);
TensorPtr clamp_min(const TensorPtr& a, Real c);
TensorPtr pow(const TensorPtr& a, const TensorPtr& p);  // a > 0, p scalar [1]

// ---- reductions ----
TensorPtr sum_all(const TensorPtr& a);   // -> [1]
TensorPtr mean_all(const TensorPtr& a);  // -> [1]
TensorPtr sum_rows(const TensorPtr& a);  // [N,C] -> [C]
TensorPtr mean_rows(const TensorPtr& a);
TensorPtr max_rows(const TensorPtr& a);     // [N,C] -> [C], ties pick lowest row
TensorPtr min_element(const TensorPtr& a);  // -> [1], ties pick lowest index
TensorPtr max_element(const TensorPtr& a);

// ---- structural ----
TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);
TensorPtr transpose(const TensorPtr& a);  // 2-d
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);      // 2-d
TensorPtr gather_rows(const TensorPtr& a, std::vector<int> idx);
TensorPtr gather_elems(const TensorPtr& a, std::vector<int> idx);  // 1-d gather
TensorPtr scatter_rows(const TensorPtr& a, std::vector<int> idx, int n_rows);
TensorPtr mul_col(const TensorPtr& a, const TensorPtr& w);  // [N,C] * [N]
TensorPtr add_row_bias(const TensorPtr& x, const TensorPtr& b);

// ---- linear algebra & network layers ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b);
TensorPtr softmax(const TensorPtr& x);  // last axis, 1-d or 2-d, max-subtracted
TensorPtr l2_normalize(const TensorPtr& x, Real eps = 1e-12);
TensorPtr l2_normalize_rows(const TensorPtr& x, Real eps = 1e-12);
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     Real eps = 1e-5);
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& k, const TensorPtr& bias, int stride_h,
                 int stride_w, PadMode pad);
TensorPtr adaptive_avg_pool2d(const TensorPtr& x, int out_h, int out_w);

// Keeps the k largest entries per row (ties resolved toward the lower
// index), zeroes the rest. Kept weights are NOT renormalized.
TensorPtr topk_row_mask(const TensorPtr& w, int k);

struct MhaParams {
    TensorPtr wq, bq, wk, bk, wv, bv, wo, bo;
};

// Attention sublayer only: per-head softmax(Q Kᵀ / sqrt(d_k)) V, heads
// concatenated and output-projected. Residual/normalization live in the
// encoder block that calls this.
TensorPtr multi_head_attention(const TensorPtr& x, const MhaParams& p, int heads);

// Raw-buffer GEMM helpers shared by op backward passes (accumulating, C += op(A)·op(B)).
void gemm_nn(int m, int n, int kdim, const Real* a, const Real* b, Real* c);
void gemm_nt(int m, int n, int kdim, const Real* a, const Real* b, Real* c);
void gemm_tn(int m, int n, int kdim, const Real* a, const Real* b, Real* c);

}  // namespace mpr::nn
