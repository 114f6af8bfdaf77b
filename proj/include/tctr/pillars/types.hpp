// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tctr/core/errors.hpp"

namespace tctr {

/// One Lidar return: position in meters, reflectance in [0, 1].
struct Point {
    float x = 0, y = 0, z = 0, r = 0;
    bool operator==(const Point&) const = default;
};

/// Ground-truth box. (x, y, z) is the box center; yaw is the heading of the length axis.
struct GtBox {
    float x = 0, y = 0, z = 0;
    float l = 1, w = 1, h = 1;
    float yaw = 0;
    int class_id = 0;
    bool operator==(const GtBox&) const = default;
};

struct PointFrame {
    std::vector<Point> points;
    std::vector<GtBox> gt_boxes;
    bool operator==(const PointFrame&) const = default;
};

/// Consecutive frames with a designated target frame.
struct SequenceSample {
    std::vector<PointFrame> frames;
    int target = 0;
    bool operator==(const SequenceSample&) const = default;

    /// The 2T+1 frames centred on the target.
    std::vector<const PointFrame*> window(int radius) const {
        if (target - radius < 0 || target + radius >= static_cast<int>(frames.size()))
            throw ContractError("sequence of " + std::to_string(frames.size()) + " frames with target " +
                                std::to_string(target) + " cannot supply a window of radius " + std::to_string(radius));
        std::vector<const PointFrame*> out;
        for (int i = target - radius; i <= target + radius; ++i) out.push_back(&frames[i]);
        return out;
    }
};

/// Wraps an angle into (-pi, pi].
inline double normalize_yaw(double a) {
    constexpr double two_pi = 2 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

/// Point-in-box test with an isotropic tolerance `inflate` (meters).
inline bool box_contains(const GtBox& b, double px, double py, double pz, double inflate = 0.0) {
    const double dx = px - b.x, dy = py - b.y;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    return std::abs(u) <= b.l / 2.0 + inflate && std::abs(v) <= b.w / 2.0 + inflate &&
           std::abs(pz - b.z) <= b.h / 2.0 + inflate;
}

}  // namespace tctr
