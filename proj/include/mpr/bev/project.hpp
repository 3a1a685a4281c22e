#pragma once

#include "mpr/bev/types.hpp"

namespace mpr::bev {

// Density cap: per-cell counts are clipped at this value and divided by it,
// bounding conv inputs to [0, 1].
inline constexpr int kDensityCap = 10;
// Elevation clip range for max-elevation value mode, meters.
inline constexpr double kElevationMin = -3.0;
inline constexpr double kElevationMax = 15.0;

// Polar orthogonal projection. Column u = floor((1 - atan2(y,x)/pi)/2 * w)
// reduced mod w, row v = floor(r/m * h); points with r >= m are discarded.
PolarBEV project_polar(const PointCloud& cloud, const PolarBEVGrid& grid, ValueMode mode);

// Cartesian ablation variant: uniform x/y binning over [-extent, extent]^2.
// Row 0 is y = +extent (image convention), column 0 is x = -extent.
PolarBEV project_cartesian(const PointCloud& cloud, double extent_m, int h, int w,
                           ValueMode mode);

// 2-d rigid transform of (x, y); z and intensity pass through.
PointCloud transform_points(const PointCloud& cloud, const Pose2D& pose);

// Columns move +j (mod w): out[.., (c + j) mod w] = in[.., c].
PolarBEV cyclic_shift(const PolarBEV& bev, int j);

// Bilinear resampling onto a new grid; azimuth treated periodically, range
// clamped. Requires target.m <= bev.grid.m.
PolarBEV resample_polar(const PolarBEV& bev, const PolarBEVGrid& target);

// Continuous polar cell coordinates for a bearing/range pair, matching the
// project_polar convention (cell (v, u) is centered at (v + 0.5, u + 0.5)).
// Used by the Gaussian splatter so camera BEVs land in the same frame.
double azimuth_to_col(double atan2_angle, int w);

}  // namespace mpr::bev
