#include "mpr/gsplat/camera.hpp"

#include <algorithm>
#include <cmath>

namespace mpr::gsplat {

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return c;
}

Mat3 mat3_transpose(const Mat3& m) {
    return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]};
}

double mat3_orthonormality_error(const Mat3& m) {
    const Mat3 mtm = mat3_mul(mat3_transpose(m), m);
    double err = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            err = std::max(err, std::abs(mtm[i * 3 + j] - (i == j ? 1.0 : 0.0)));
    return err;
}

double CameraRig::fov_coverage_deg() const {
    // Merge [yaw - hfov/2, yaw + hfov/2] intervals on the circle.
    if (views.empty()) return 0;
    std::vector<std::pair<double, double>> spans;
    for (const auto& v : views) {
        double lo = v.yaw_center - v.hfov_rad / 2;
        double hi = v.yaw_center + v.hfov_rad / 2;
        if (hi - lo >= 2 * M_PI) return 360.0;
        lo = std::fmod(lo, 2 * M_PI);
        if (lo < 0) lo += 2 * M_PI;
        hi = lo + (v.hfov_rad);
        if (hi > 2 * M_PI) {
            spans.emplace_back(lo, 2 * M_PI);
            spans.emplace_back(0, hi - 2 * M_PI);
        } else {
            spans.emplace_back(lo, hi);
        }
    }
    std::sort(spans.begin(), spans.end());
    double covered = 0, cur_lo = spans[0].first, cur_hi = spans[0].second;
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first <= cur_hi) {
            cur_hi = std::max(cur_hi, spans[i].second);
        } else {
            covered += cur_hi - cur_lo;
            cur_lo = spans[i].first;
            cur_hi = spans[i].second;
        }
    }
    covered += cur_hi - cur_lo;
    return std::min(covered * 180.0 / M_PI, 360.0);
}

bool project_to_view(const CameraView& view, const Vec3& p_vehicle, double& u, double& v,
                     double& depth) {
    const Vec3 pc = {
        view.rotation[0] * p_vehicle[0] + view.rotation[1] * p_vehicle[1] +
            view.rotation[2] * p_vehicle[2] + view.translation[0],
        view.rotation[3] * p_vehicle[0] + view.rotation[4] * p_vehicle[1] +
            view.rotation[5] * p_vehicle[2] + view.translation[1],
        view.rotation[6] * p_vehicle[0] + view.rotation[7] * p_vehicle[1] +
            view.rotation[8] * p_vehicle[2] + view.translation[2],
    };
    depth = pc[2];
    if (depth <= 0) return false;
    u = view.k[0] * pc[0] / depth + view.k[1] * pc[1] / depth + view.k[2];
    v = view.k[4] * pc[1] / depth + view.k[5];
    return true;
}

}  // namespace mpr::gsplat
