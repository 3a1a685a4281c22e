#include "mpr/bev/project.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpr::bev {

namespace {

void check_grid(const PolarBEVGrid& g) {
    if (g.h < 1 || g.w < 1 || g.m <= 0)
        throw std::invalid_argument("invalid polar grid (h,w >= 1, m > 0 required)");
}

PolarBEV rasterize_counts(const PolarBEVGrid& grid, ValueMode mode,
                          const std::vector<int>& cell_of_point, const PointCloud& cloud) {
    PolarBEV bev;
    bev.grid = grid;
    bev.channels = 1;
    bev.value_mode = mode;
    bev.data = nn::Tensor::create({1, grid.h, grid.w});
    auto& out = bev.data->data;

    if (mode == ValueMode::kDensity) {
        std::vector<int> counts(out.size(), 0);
        for (int cell : cell_of_point)
            if (cell >= 0) ++counts[static_cast<std::size_t>(cell)];
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<nn::Real>(std::min(counts[i], kDensityCap)) / kDensityCap;
    } else {  // kMaxElevation
        std::vector<double> zmax(out.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t p = 0; p < cloud.points.size(); ++p) {
            const int cell = cell_of_point[p];
            if (cell < 0) continue;
            zmax[static_cast<std::size_t>(cell)] =
                std::max(zmax[static_cast<std::size_t>(cell)], double(cloud.points[p].z));
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (std::isinf(zmax[i])) continue;  // empty cell stays 0
            const double z = std::clamp(zmax[i], kElevationMin, kElevationMax);
            out[i] = (z - kElevationMin) / (kElevationMax - kElevationMin);
        }
    }
    return bev;
}

}  // namespace

double azimuth_to_col(double atan2_angle, int w) {
    return 0.5 * (1.0 - atan2_angle / M_PI) * w;
}

PolarBEV project_polar(const PointCloud& cloud, const PolarBEVGrid& grid, ValueMode mode) {
    check_grid(grid);
    if (mode != ValueMode::kDensity && mode != ValueMode::kMaxElevation)
        throw std::invalid_argument("project_polar supports density and max_elevation modes");

    std::vector<int> cell_of_point(cloud.points.size(), -1);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        const double r = std::hypot(double(p.x), double(p.y));
        if (r >= grid.m) continue;  // half-open range bins
        const double ang = std::atan2(double(p.y), double(p.x));
        int u = static_cast<int>(std::floor(azimuth_to_col(ang, grid.w)));
        u = ((u % grid.w) + grid.w) % grid.w;
        const int v = static_cast<int>(std::floor(r / grid.m * grid.h));
        cell_of_point[i] = v * grid.w + u;
    }
    return rasterize_counts(grid, mode, cell_of_point, cloud);
}

PolarBEV project_cartesian(const PointCloud& cloud, double extent_m, int h, int w,
                           ValueMode mode) {
    if (extent_m <= 0 || h < 1 || w < 1)
        throw std::invalid_argument("invalid cartesian grid parameters");
    if (mode != ValueMode::kDensity && mode != ValueMode::kMaxElevation)
        throw std::invalid_argument("project_cartesian supports density and max_elevation modes");

    std::vector<int> cell_of_point(cloud.points.size(), -1);
    const double span = 2.0 * extent_m;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        if (p.x < -extent_m || p.x >= extent_m || p.y < -extent_m || p.y >= extent_m) continue;
        const int col = static_cast<int>(std::floor((p.x + extent_m) / span * w));
        const int row = static_cast<int>(std::floor((extent_m - p.y) / span * h));
        if (col < 0 || col >= w || row < 0 || row >= h) continue;
        cell_of_point[i] = row * w + col;
    }
    PolarBEVGrid grid{h, w, extent_m};  // m reused as extent for the ablation variant
    return rasterize_counts(grid, mode, cell_of_point, cloud);
}

PointCloud transform_points(const PointCloud& cloud, const Pose2D& pose) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    for (const auto& p : cloud.points) {
        Point q = p;
        q.x = static_cast<float>(c * p.x - s * p.y + pose.x);
        q.y = static_cast<float>(s * p.x + c * p.y + pose.y);
        out.points.push_back(q);
    }
    return out;
}

PolarBEV cyclic_shift(const PolarBEV& bev, int j) {
    const int w = bev.grid.w;
    PolarBEV out;
    out.grid = bev.grid;
    out.channels = bev.channels;
    out.value_mode = bev.value_mode;
    out.data = nn::Tensor::create(bev.data->shape);
    const int h = bev.grid.h;
    const int shift = ((j % w) + w) % w;
    for (int c = 0; c < bev.channels; ++c) {
        for (int v = 0; v < h; ++v) {
            const std::size_t base = (std::size_t(c) * h + v) * w;
            for (int u = 0; u < w; ++u) {
                out.data->data[base + (u + shift) % w] = bev.data->data[base + u];
            }
        }
    }
    return out;
}

PolarBEV resample_polar(const PolarBEV& bev, const PolarBEVGrid& target) {
    check_grid(target);
    if (target.m > bev.grid.m + 1e-12)
        throw std::invalid_argument("resample_polar target range exceeds source range");

    PolarBEV out;
    out.grid = target;
    out.channels = bev.channels;
    out.value_mode = bev.value_mode;
    out.data = nn::Tensor::create({bev.channels, target.h, target.w});

    const int sh = bev.grid.h, sw = bev.grid.w;
    for (int c = 0; c < bev.channels; ++c) {
        const nn::Real* src = bev.data->data.data() + std::size_t(c) * sh * sw;
        nn::Real* dst = out.data->data.data() + std::size_t(c) * target.h * target.w;
        for (int v = 0; v < target.h; ++v) {
            // Source row for this target row's range (cell centers).
            const double r = (v + 0.5) / target.h * target.m;
            double fv = r / bev.grid.m * sh - 0.5;
            fv = std::clamp(fv, 0.0, double(sh - 1));
            const int v0 = static_cast<int>(std::floor(fv));
            const int v1 = std::min(v0 + 1, sh - 1);
            const double av = fv - v0;
            for (int u = 0; u < target.w; ++u) {
                const double fu = (u + 0.5) / target.w * sw - 0.5;
                double fu_wrapped = std::fmod(fu, double(sw));
                if (fu_wrapped < 0) fu_wrapped += sw;
                const int u0 = static_cast<int>(std::floor(fu_wrapped)) % sw;
                const int u1 = (u0 + 1) % sw;
                const double au = fu_wrapped - std::floor(fu_wrapped);
                const double top = src[std::size_t(v0) * sw + u0] * (1 - au) +
                                   src[std::size_t(v0) * sw + u1] * au;
                const double bot = src[std::size_t(v1) * sw + u0] * (1 - au) +
                                   src[std::size_t(v1) * sw + u1] * au;
                dst[std::size_t(v) * target.w + u] = top * (1 - av) + bot * av;
            }
        }
    }
    return out;
}

}  // namespace mpr::bev
