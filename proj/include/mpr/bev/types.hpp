#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mpr/nn/tensor.hpp"

namespace mpr::bev {

struct Point {
    float x = 0, y = 0, z = 0, intensity = 0;
};

struct PointCloud {
    std::vector<Point> points;

    bool empty() const { return points.empty(); }
    std::size_t size() const { return points.size(); }
};

struct Pose2D {
    double x = 0, y = 0;
    double yaw = 0;  // normalized to (-pi, pi]
    double timestamp = 0;
};

inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0) a += 2.0 * M_PI;
    return a - M_PI;
}

inline double pose_distance(const Pose2D& a, const Pose2D& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Absolute heading difference in radians, in [0, pi].
inline double heading_difference(const Pose2D& a, const Pose2D& b) {
    return std::abs(wrap_angle(a.yaw - b.yaw));
}

// (h, w) = (range rows, azimuth columns); the azimuth axis is periodic.
struct PolarBEVGrid {
    int h = 0;
    int w = 0;
    double m = 0;  // max perception range, meters

    bool operator==(const PolarBEVGrid&) const = default;
};

enum class ValueMode { kDensity, kMaxElevation, kIntensity, kFeature };

struct PolarBEV {
    PolarBEVGrid grid;
    int channels = 1;
    nn::TensorPtr data;  // [channels, h, w]
    ValueMode value_mode = ValueMode::kDensity;

    double at(int c, int v, int u) const {
        return data->data[(std::size_t(c) * grid.h + v) * grid.w + u];
    }
};

}  // namespace mpr::bev
