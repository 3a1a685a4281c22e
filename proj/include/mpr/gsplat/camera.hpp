#pragma once

#include <array>
#include <vector>

#include "mpr/nn/tensor.hpp"

namespace mpr::gsplat {

using Mat3 = std::array<double, 9>;   // row-major
using Vec3 = std::array<double, 3>;

inline Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_transpose(const Mat3& m);
double mat3_orthonormality_error(const Mat3& m);

// One camera of the rig. K is expressed directly in feature-image pixel
// units, i.e. the principal point / focal lengths address the [C,H,W]
// feature image; converters from real imagery must pre-scale K by
// (W_feat / W_image, H_feat / H_image). R, t map vehicle-frame points into
// the camera frame (x right, y down, z forward): p_cam = R p + t.
struct CameraView {
    nn::TensorPtr feature_image;  // [C,H,W]
    Mat3 k{};
    Mat3 rotation{};
    Vec3 translation{};
    double yaw_center = 0;    // optical-axis bearing in the vehicle frame
    double hfov_rad = 0;      // horizontal field of view
};

struct CameraRig {
    std::vector<CameraView> views;

    // Total azimuth coverage in degrees, with view overlaps merged.
    double fov_coverage_deg() const;
};

// Pinhole projection into feature-pixel coordinates. Returns false when the
// point is at or behind the camera plane.
bool project_to_view(const CameraView& view, const Vec3& p_vehicle, double& u, double& v,
                     double& depth);

}  // namespace mpr::gsplat
