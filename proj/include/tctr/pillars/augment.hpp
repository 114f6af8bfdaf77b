// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "tctr/core/rng.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::pillars {

struct AugmentConfig {
    bool enabled = true;
    bool flip_x = true;
    bool flip_y = true;
    double rotation = 0.3925;  // max |angle|, radians
    double scale_min = 0.95;
    double scale_max = 1.05;
};

/// One global transform: optional mirror of x and/or y, rotation about z, uniform scale.
struct SceneTransform {
    bool flip_x = false;
    bool flip_y = false;
    double angle = 0.0;
    double scale = 1.0;

    void apply(double& x, double& y, double& z) const {
        if (flip_x) x = -x;
        if (flip_y) y = -y;
        const double c = std::cos(angle), s = std::sin(angle);
        const double rx = c * x - s * y, ry = s * x + c * y;
        x = rx * scale;
        y = ry * scale;
        z *= scale;
    }

    Point apply(Point p) const {
        double x = p.x, y = p.y, z = p.z;
        apply(x, y, z);
        return {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), p.r};
    }

    GtBox apply(GtBox b) const {
        double x = b.x, y = b.y, z = b.z;
        apply(x, y, z);
        double yaw = b.yaw;
        if (flip_x) yaw = std::numbers::pi - yaw;
        if (flip_y) yaw = -yaw;
        yaw += angle;
        return {static_cast<float>(x),
                static_cast<float>(y),
                static_cast<float>(z),
                static_cast<float>(b.l * scale),
                static_cast<float>(b.w * scale),
                static_cast<float>(b.h * scale),
                static_cast<float>(normalize_yaw(yaw)),
                b.class_id};
    }

    SequenceSample apply(const SequenceSample& seq) const {
        SequenceSample out;
        out.target = seq.target;
        for (const auto& f : seq.frames) {
            PointFrame g;
            g.points.reserve(f.points.size());
            for (const auto& p : f.points) g.points.push_back(apply(p));
            for (const auto& b : f.gt_boxes) g.gt_boxes.push_back(apply(b));
            out.frames.push_back(std::move(g));
        }
        return out;
    }
};

inline SceneTransform draw_transform(const AugmentConfig& cfg, Rng& rng) {
    SceneTransform t;
    if (!cfg.enabled) return t;
    t.flip_x = cfg.flip_x && rng.bernoulli(0.5);
    t.flip_y = cfg.flip_y && rng.bernoulli(0.5);
    t.angle = rng.uniform(-cfg.rotation, cfg.rotation);
    t.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    return t;
}

/// Draws one transform and applies it to every frame of the sequence.
inline SequenceSample augment_sequence(const SequenceSample& seq, const AugmentConfig& cfg, Rng& rng) {
    return draw_transform(cfg, rng).apply(seq);
}

}  // namespace tctr::pillars
