// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "tctr/pillars/grid.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::head {

inline constexpr int kBoxDims = 7;
inline constexpr int kYawsPerClass = 2;

/// Per-class anchor template: mean size and mean center height of training boxes.
struct AnchorStats {
    float l = 1, w = 1, h = 1, z = 0;
};

/// Axis-aligned anchors at every output cell, per class, at yaw 0 and pi/2.
/// Anchor index = ((row * W + col) * classes + class) * 2 + yaw index.
struct AnchorGrid {
    int rows = 0, cols = 0, classes = 0;
    double x_min = 0, y_min = 0, cell_x = 1, cell_y = 1;
    std::vector<AnchorStats> stats;

    static AnchorGrid make(const pillars::GridConfig& g, int rows, int cols, std::vector<AnchorStats> stats) {
        AnchorGrid a;
        a.rows = rows;
        a.cols = cols;
        a.classes = static_cast<int>(stats.size());
        a.x_min = g.x_min;
        a.y_min = g.y_min;
        a.cell_x = (g.x_max - g.x_min) / cols;
        a.cell_y = (g.y_max - g.y_min) / rows;
        a.stats = std::move(stats);
        return a;
    }

    int per_location() const { return classes * kYawsPerClass; }
    int size() const { return rows * cols * per_location(); }
    int class_of(int i) const { return (i / kYawsPerClass) % classes; }

    GtBox anchor(int i) const {
        const int yaw_idx = i % kYawsPerClass;
        const int cls = class_of(i);
        const int loc = i / per_location();
        const int r = loc / cols, c = loc % cols;
        const AnchorStats& s = stats[cls];
        return {static_cast<float>(x_min + (c + 0.5) * cell_x),
                static_cast<float>(y_min + (r + 0.5) * cell_y),
                s.z,
                s.l,
                s.w,
                s.h,
                static_cast<float>(yaw_idx == 0 ? 0.0 : std::numbers::pi / 2),
                cls};
    }
};

/// Per-class mean (l, w, h, z) of the given boxes; classes without boxes keep `fallback`.
inline std::vector<AnchorStats> mean_box_stats(const std::vector<GtBox>& boxes, int classes,
                                               const std::vector<AnchorStats>& fallback) {
    std::vector<std::array<double, 5>> acc(classes, {0, 0, 0, 0, 0});
    for (const auto& b : boxes) {
        if (b.class_id < 0 || b.class_id >= classes) continue;
        auto& a = acc[b.class_id];
        a[0] += b.l;
        a[1] += b.w;
        a[2] += b.h;
        a[3] += b.z;
        a[4] += 1;
    }
    std::vector<AnchorStats> out(fallback.begin(), fallback.end());
    out.resize(classes);
    for (int c = 0; c < classes; ++c)
        if (acc[c][4] > 0)
            out[c] = {static_cast<float>(acc[c][0] / acc[c][4]), static_cast<float>(acc[c][1] / acc[c][4]),
                      static_cast<float>(acc[c][2] / acc[c][4]), static_cast<float>(acc[c][3] / acc[c][4])};
    return out;
}

/// Axis-aligned BEV footprint: l along x unless the yaw is nearer the y axis.
struct Footprint {
    double x0, y0, x1, y1;
};

inline Footprint footprint(const GtBox& b) {
    const bool swap = std::abs(std::sin(b.yaw)) > std::abs(std::cos(b.yaw));
    const double ex = (swap ? b.w : b.l) / 2.0, ey = (swap ? b.l : b.w) / 2.0;
    return {b.x - ex, b.y - ey, b.x + ex, b.y + ey};
}

/// Smallest axis-aligned rectangle containing the rotated BEV box.
inline Footprint standup_footprint(const GtBox& b) {
    const double c = std::abs(std::cos(b.yaw)), s = std::abs(std::sin(b.yaw));
    const double ex = (c * b.l + s * b.w) / 2.0, ey = (s * b.l + c * b.w) / 2.0;
    return {b.x - ex, b.y - ey, b.x + ex, b.y + ey};
}

inline double footprint_iou(const Footprint& fa, const Footprint& fb) {
    const double iw = std::min(fa.x1, fb.x1) - std::max(fa.x0, fb.x0);
    const double ih = std::min(fa.y1, fb.y1) - std::max(fa.y0, fb.y0);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double ua = (fa.x1 - fa.x0) * (fa.y1 - fa.y0) + (fb.x1 - fb.x0) * (fb.y1 - fb.y0) - inter;
    return inter / ua;
}

/// IoU of axis-aligned BEV footprints, ignoring height.
inline double bev_iou(const GtBox& a, const GtBox& b) { return footprint_iou(footprint(a), footprint(b)); }

/// IoU of the enclosing axis-aligned rectangles; continuous in yaw, used for suppression.
inline double standup_iou(const GtBox& a, const GtBox& b) {
    return footprint_iou(standup_footprint(a), standup_footprint(b));
}

/// Wraps an angle into [-pi/2, pi/2).
inline double wrap_half_pi(double a) {
    a = std::fmod(a + std::numbers::pi / 2, std::numbers::pi);
    if (a < 0) a += std::numbers::pi;
    return a - std::numbers::pi / 2;
}

using Residual = std::array<double, kBoxDims>;

/// Diagonal-normalized residuals of box `g` against anchor `a`. The yaw term is the
/// sine of the difference wrapped to [-pi/2, pi/2), which is invertible modulo pi.
inline Residual encode_box(const GtBox& g, const GtBox& a) {
    const double d = std::sqrt(double(a.l) * a.l + double(a.w) * a.w);
    return {(double(g.x) - a.x) / d,
            (double(g.y) - a.y) / d,
            (double(g.z) - a.z) / a.h,
            std::log(double(g.l) / a.l),
            std::log(double(g.w) / a.w),
            std::log(double(g.h) / a.h),
            std::sin(wrap_half_pi(double(g.yaw) - a.yaw))};
}

inline int direction_bit(double yaw) { return yaw > 0 ? 1 : 0; }

/// Inverse of encode_box. The yaw is recovered modulo pi and then put on the side
/// selected by `dir` (1: yaw in (0, pi], 0: yaw in (-pi, 0]).
inline GtBox decode_box(const std::array<double, kBoxDims>& r, const GtBox& a, int dir) {
    const double d = std::sqrt(double(a.l) * a.l + double(a.w) * a.w);
    double yaw = normalize_yaw(a.yaw + std::asin(std::clamp(r[6], -1.0, 1.0)));
    if (direction_bit(yaw) != dir) yaw = normalize_yaw(yaw + std::numbers::pi);
    return {static_cast<float>(a.x + r[0] * d),
            static_cast<float>(a.y + r[1] * d),
            static_cast<float>(a.z + r[2] * a.h),
            static_cast<float>(a.l * std::exp(std::clamp(r[3], -10.0, 10.0))),
            static_cast<float>(a.w * std::exp(std::clamp(r[4], -10.0, 10.0))),
            static_cast<float>(a.h * std::exp(std::clamp(r[5], -10.0, 10.0))),
            static_cast<float>(yaw),
            a.class_id};
}

struct MatchThresholds {
    double positive = 0.6;
    double negative = 0.45;
};

/// Per-anchor training targets. label: 1 positive, 0 negative, -1 ignored.
struct TargetAssignment {
    std::vector<int> label;
    std::vector<int> matched;  // gt index for positives, -1 otherwise
    std::vector<Residual> residual;
    std::vector<int> direction;

    int positives() const { return static_cast<int>(std::count(label.begin(), label.end(), 1)); }
};

/// Same-class BEV IoU matching. Each gt also claims its best-overlapping anchor.
inline TargetAssignment assign_targets(const AnchorGrid& anchors, const std::vector<GtBox>& gts,
                                       const MatchThresholds& thr = {}) {
    const int n = anchors.size();
    TargetAssignment ta;
    ta.label.assign(n, 0);
    ta.matched.assign(n, -1);
    ta.residual.assign(n, Residual{});
    ta.direction.assign(n, 0);
    std::vector<double> best_iou(n, 0.0);
    std::vector<int> best_gt(n, -1);
    std::vector<double> gt_best(gts.size(), 0.0);
    std::vector<int> gt_anchor(gts.size(), -1);
    for (int i = 0; i < n; ++i) {
        const int cls = anchors.class_of(i);
        const GtBox a = anchors.anchor(i);
        for (std::size_t k = 0; k < gts.size(); ++k) {
            if (gts[k].class_id != cls) continue;
            const double iou = bev_iou(a, gts[k]);
            if (iou > best_iou[i]) {
                best_iou[i] = iou;
                best_gt[i] = static_cast<int>(k);
            }
            if (iou > gt_best[k]) {
                gt_best[k] = iou;
                gt_anchor[k] = i;
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        if (best_iou[i] >= thr.positive) {
            ta.label[i] = 1;
            ta.matched[i] = best_gt[i];
        } else if (best_iou[i] >= thr.negative) {
            ta.label[i] = -1;
        }
    }
    for (std::size_t k = 0; k < gts.size(); ++k)
        if (gt_anchor[k] >= 0) {
            ta.label[gt_anchor[k]] = 1;
            ta.matched[gt_anchor[k]] = static_cast<int>(k);
        }
    for (int i = 0; i < n; ++i)
        if (ta.label[i] == 1) {
            const GtBox& g = gts[ta.matched[i]];
            ta.residual[i] = encode_box(g, anchors.anchor(i));
            ta.direction[i] = direction_bit(g.yaw);
        }
    return ta;
}

}  // namespace tctr::head
