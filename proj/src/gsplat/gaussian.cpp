#include "mpr/gsplat/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mpr/bev/project.hpp"
#include "mpr/nn/ops.hpp"

namespace mpr::gsplat {

using nn::Real;
using nn::Tensor;
using nn::TensorPtr;

SamplingGrid make_cylindrical_grid(int n_rho, int n_theta, int n_z, double m, double z_lo,
                                   double z_hi) {
    if (n_rho < 1 || n_theta < 1 || n_z < 1)
        throw std::invalid_argument("cylindrical grid bin counts must be >= 1");
    if (m <= 0) throw std::invalid_argument("cylindrical grid range must be positive");
    if (z_lo >= z_hi) throw std::invalid_argument("cylindrical grid requires z_lo < z_hi");

    SamplingGrid g;
    g.n_rho = n_rho;
    g.n_theta = n_theta;
    g.n_z = n_z;
    g.m = m;
    g.z_lo = z_lo;
    g.z_hi = z_hi;
    g.positions.reserve(std::size_t(n_rho) * n_theta * n_z);
    for (int ir = 0; ir < n_rho; ++ir) {
        const double rho = (ir + 0.5) / n_rho * m;
        for (int it = 0; it < n_theta; ++it) {
            const double theta = (it + 0.5) / n_theta * 2.0 * M_PI;
            const double x = rho * std::cos(theta);
            const double y = rho * std::sin(theta);
            for (int iz = 0; iz < n_z; ++iz) {
                const double z = z_lo + (iz + 0.5) / n_z * (z_hi - z_lo);
                g.positions.push_back({x, y, z});
                g.rho.push_back(rho);
                g.theta.push_back(theta);
            }
        }
    }
    return g;
}

LiftedFeatures lift_features(const SamplingGrid& grid, const CameraRig& rig) {
    if (rig.views.empty()) throw std::invalid_argument("lift_features requires a nonempty rig");
    const int c = rig.views[0].feature_image->dim(0);
    for (const auto& v : rig.views) {
        if (v.feature_image->rank() != 3 || v.feature_image->dim(0) != c)
            throw std::invalid_argument("rig feature images must share channel count");
    }

    const int n = grid.size();
    LiftedFeatures out;
    out.features = Tensor::create({n, c});
    out.visible.assign(static_cast<std::size_t>(n), 0);

    std::vector<Real> acc(static_cast<std::size_t>(c));
    for (int i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), Real(0));
        int hits = 0;
        for (const auto& view : rig.views) {
            double u, v, depth;
            if (!project_to_view(view, grid.positions[static_cast<std::size_t>(i)], u, v, depth))
                continue;
            const int h = view.feature_image->dim(1);
            const int w = view.feature_image->dim(2);
            if (u < 0 || u > w - 1 || v < 0 || v > h - 1) continue;
            const int x0 = std::min(static_cast<int>(std::floor(u)), w - 1);
            const int y0 = std::min(static_cast<int>(std::floor(v)), h - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = u - x0, fy = v - y0;
            const Real* img = view.feature_image->data.data();
            for (int ch = 0; ch < c; ++ch) {
                const Real* plane = img + std::size_t(ch) * h * w;
                const double top = plane[std::size_t(y0) * w + x0] * (1 - fx) +
                                   plane[std::size_t(y0) * w + x1] * fx;
                const double bot = plane[std::size_t(y1) * w + x0] * (1 - fx) +
                                   plane[std::size_t(y1) * w + x1] * fx;
                acc[static_cast<std::size_t>(ch)] += top * (1 - fy) + bot * fy;
            }
            ++hits;
        }
        if (hits > 0) {
            out.visible[static_cast<std::size_t>(i)] = 1;
            ++out.visible_count;
            for (int ch = 0; ch < c; ++ch)
                out.features->data[std::size_t(i) * c + ch] = acc[static_cast<std::size_t>(ch)] / hits;
        }
    }
    return out;
}

GaussianHeadParams GaussianHeadParams::init(int c_in, int hidden, int c_out, Rng& rng) {
    GaussianHeadParams p;
    p.reduce_w1 = nn::kaiming_normal({c_in, hidden}, c_in, rng);
    p.reduce_b1 = nn::zeros_init({hidden});
    p.reduce_w2 = nn::kaiming_normal({hidden, c_out}, hidden, rng);
    p.reduce_b2 = nn::zeros_init({c_out});
    p.alpha_w = nn::kaiming_normal({c_out, 1}, c_out, rng);
    p.alpha_b = nn::zeros_init({1});
    return p;
}

void GaussianHeadParams::register_in(nn::ParameterSet& ps, const std::string& prefix) const {
    ps.add(prefix + ".reduce_w1", reduce_w1);
    ps.add(prefix + ".reduce_b1", reduce_b1);
    ps.add(prefix + ".reduce_w2", reduce_w2);
    ps.add(prefix + ".reduce_b2", reduce_b2);
    ps.add(prefix + ".alpha_w", alpha_w);
    ps.add(prefix + ".alpha_b", alpha_b);
}

GaussianHeadParams GaussianHeadParams::from_set(const nn::ParameterSet& ps,
                                                const std::string& prefix) {
    GaussianHeadParams p;
    p.reduce_w1 = ps.get(prefix + ".reduce_w1");
    p.reduce_b1 = ps.get(prefix + ".reduce_b1");
    p.reduce_w2 = ps.get(prefix + ".reduce_w2");
    p.reduce_b2 = ps.get(prefix + ".reduce_b2");
    p.alpha_w = ps.get(prefix + ".alpha_w");
    p.alpha_b = ps.get(prefix + ".alpha_b");
    return p;
}

GaussianSet prepare_gaussians(const SamplingGrid& grid, const LiftedFeatures& lifted,
                              const GaussianHeadParams& params,
                              const bev::PolarBEVGrid& out_grid) {
    std::vector<int> visible_idx;
    visible_idx.reserve(static_cast<std::size_t>(lifted.visible_count));
    for (int i = 0; i < grid.size(); ++i)
        if (lifted.visible[static_cast<std::size_t>(i)]) visible_idx.push_back(i);

    GaussianSet set;
    if (visible_idx.empty()) {
        // No camera sees any sample point; splatting an empty set yields a
        // zero BEV downstream.
        return set;
    }

    auto f = nn::gather_rows(lifted.features, visible_idx);
    auto h1 = nn::relu(nn::linear(f, params.reduce_w1, params.reduce_b1));
    set.features = nn::linear(h1, params.reduce_w2, params.reduce_b2);
    auto logits = nn::linear(set.features, params.alpha_w, params.alpha_b);
    set.alpha = nn::sigmoid(nn::reshape(logits, {static_cast<int>(visible_idx.size())}));

    set.mu_row.reserve(visible_idx.size());
    set.mu_col.reserve(visible_idx.size());
    for (int i : visible_idx) {
        const double rho = grid.rho[static_cast<std::size_t>(i)];
        double theta = grid.theta[static_cast<std::size_t>(i)];
        if (theta > M_PI) theta -= 2.0 * M_PI;  // atan2 convention
        set.mu_row.push_back(rho / out_grid.m * out_grid.h);
        set.mu_col.push_back(bev::azimuth_to_col(theta, out_grid.w));
    }
    return set;
}

bev::PolarBEV splat_polar(const GaussianSet& gaussians, const bev::PolarBEVGrid& out,
                          double sigma_bins, double truncation_sigmas) {
    if (sigma_bins <= 0) throw std::invalid_argument("splat sigma must be positive");
    const int h = out.h, w = out.w;

    bev::PolarBEV bevout;
    bevout.grid = out;
    bevout.value_mode = bev::ValueMode::kFeature;

    const bool empty = !gaussians.features;
    const int channels = empty ? 1 : gaussians.features->dim(1);
    bevout.channels = channels;
    auto result = Tensor::create({channels, h, w});
    bevout.data = result;
    if (empty) return bevout;

    const auto& feat = gaussians.features;
    const auto& alpha = gaussians.alpha;
    const int g_count = feat->dim(0);
    const double radius = truncation_sigmas * sigma_bins;
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma_bins * sigma_bins);

    // Shared cell walk for forward and backward. Captures by value: the
    // backward closure outlives this call.
    auto for_each_cell = [mu_row = gaussians.mu_row, mu_col = gaussians.mu_col, h, w, radius,
                          inv_two_sigma2](int g, auto&& body) {
        const double mr = mu_row[static_cast<std::size_t>(g)];
        const double mc = mu_col[static_cast<std::size_t>(g)];
        const int r0 = std::max(0, static_cast<int>(std::floor(mr - 0.5 - radius)));
        const int r1 = std::min(h - 1, static_cast<int>(std::ceil(mr - 0.5 + radius)));
        int c0 = static_cast<int>(std::floor(mc - 0.5 - radius));
        int c1 = static_cast<int>(std::ceil(mc - 0.5 + radius));
        if (c1 - c0 + 1 >= w) {
            c0 = 0;
            c1 = w - 1;
        }
        for (int r = r0; r <= r1; ++r) {
            const double dr = (r + 0.5) - mr;
            for (int cc = c0; cc <= c1; ++cc) {
                double dc = (cc + 0.5) - mc;
                // Column distance is periodic.
                dc = std::remainder(dc, double(w));
                const double d2 = dr * dr + dc * dc;
                if (d2 > radius * radius) continue;
                const int col = ((cc % w) + w) % w;
                body(r, col, std::exp(-d2 * inv_two_sigma2));
            }
        }
    };

    for (int g = 0; g < g_count; ++g) {
        const Real a = alpha->data[static_cast<std::size_t>(g)];
        const Real* frow = feat->data.data() + std::size_t(g) * channels;
        for_each_cell(g, [&](int r, int col, double wgt) {
            const Real contrib = static_cast<Real>(a * wgt);
            for (int ch = 0; ch < channels; ++ch)
                result->data[(std::size_t(ch) * h + r) * w + col] += frow[ch] * contrib;
        });
    }

    if (nn::GradMode::enabled() && (feat->requires_grad || alpha->requires_grad)) {
        result->requires_grad = true;
        result->parents = {feat, alpha};
        result->backward_fn = [feat, alpha, h, w, channels, for_each_cell,
                               g_count](Tensor& self) {
            if (feat->requires_grad) feat->ensure_grad();
            if (alpha->requires_grad) alpha->ensure_grad();
            for (int g = 0; g < g_count; ++g) {
                const Real a = alpha->data[static_cast<std::size_t>(g)];
                const Real* frow = feat->data.data() + std::size_t(g) * channels;
                Real* fgrad =
                    feat->requires_grad ? feat->grad.data() + std::size_t(g) * channels : nullptr;
                Real alpha_acc = 0;
                for_each_cell(g, [&](int r, int col, double wgt) {
                    for (int ch = 0; ch < channels; ++ch) {
                        const Real gout = self.grad[(std::size_t(ch) * h + r) * w + col];
                        if (fgrad) fgrad[ch] += gout * static_cast<Real>(a * wgt);
                        alpha_acc += gout * frow[ch] * static_cast<Real>(wgt);
                    }
                });
                if (alpha->requires_grad) alpha->grad[static_cast<std::size_t>(g)] += alpha_acc;
            }
        };
    }
    return bevout;
}

}  // namespace mpr::gsplat
