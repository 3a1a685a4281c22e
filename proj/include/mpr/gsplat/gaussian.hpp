#pragma once

#include "mpr/bev/types.hpp"
#include "mpr/gsplat/camera.hpp"
#include "mpr/nn/params.hpp"

namespace mpr::gsplat {

// Parameter-free cylindrical sampling lattice; points sit at bin centers of
// rho in (0, m], theta in [0, 2pi), z in [z_lo, z_hi].
struct SamplingGrid {
    int n_rho = 0, n_theta = 0, n_z = 0;
    double m = 0, z_lo = 0, z_hi = 0;
    // Per point: cartesian position and cylindrical (rho, theta).
    std::vector<Vec3> positions;
    std::vector<double> rho;
    std::vector<double> theta;

    int size() const { return static_cast<int>(positions.size()); }
};

SamplingGrid make_cylindrical_grid(int n_rho, int n_theta, int n_z, double m, double z_lo,
                                   double z_hi);

// Per grid point: mean of bilinear feature samples over the views that see
// it (positive depth, pixel inside the feature image); invisible points get
// a zero feature and visible=false.
struct LiftedFeatures {
    nn::TensorPtr features;      // [N, C], rows for invisible points are zero
    std::vector<char> visible;   // size N
    int visible_count = 0;
};
LiftedFeatures lift_features(const SamplingGrid& grid, const CameraRig& rig);

// Gaussians ready for splatting: reduced features, opacity, and BEV-space
// centers in continuous (row, col) bin units of the output grid. Covariance
// is shared and isotropic (sigma_bins^2 * I).
struct GaussianSet {
    nn::TensorPtr features;      // [G, C'] (with gradient tracking when training)
    nn::TensorPtr alpha;         // [G]
    std::vector<double> mu_row;  // size G
    std::vector<double> mu_col;
};

// MLPs that reduce lifted features and predict opacity.
struct GaussianHeadParams {
    nn::TensorPtr reduce_w1, reduce_b1, reduce_w2, reduce_b2;  // C -> hidden -> C'
    nn::TensorPtr alpha_w, alpha_b;                            // C' -> 1, sigmoid

    static GaussianHeadParams init(int c_in, int hidden, int c_out, Rng& rng);
    void register_in(nn::ParameterSet& ps, const std::string& prefix) const;
    static GaussianHeadParams from_set(const nn::ParameterSet& ps, const std::string& prefix);
};

GaussianSet prepare_gaussians(const SamplingGrid& grid, const LiftedFeatures& lifted,
                              const GaussianHeadParams& params, const bev::PolarBEVGrid& out_grid);

// Orthogonal splat: B(x) = sum_i f'_i a_i exp(-|x - mu_i|^2 / (2 sigma^2))
// over BEV cell centers, column distance taken modulo w, contributions
// beyond `truncation_sigmas` omitted. Gradients flow to features and alpha.
bev::PolarBEV splat_polar(const GaussianSet& gaussians, const bev::PolarBEVGrid& out,
                          double sigma_bins, double truncation_sigmas = 3.0);

}  // namespace mpr::gsplat
