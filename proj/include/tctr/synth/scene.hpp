// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "tctr/core/rng.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::synth {

struct ClassTemplate {
    float l, w, h;
};

/// Generator knobs. The sensor sits at the origin; the ground plane is z = ground_z.
struct SceneConfig {
    double x_min = -6.4, x_max = 6.4, y_min = -6.4, y_max = 6.4;
    double ground_z = -1.73;
    int objects_min = 2, objects_max = 3;
    std::vector<ClassTemplate> classes = {{4.2f, 1.9f, 1.6f}, {0.8f, 0.8f, 1.7f}};
    double size_jitter = 0.10;
    double speed_min = 0.0, speed_max = 0.3;  // m per frame
    double yaw_rate_max = 0.05;               // rad per frame
    double density = 20.0;                    // points per m^2 of visible surface
    double falloff_range = 5.0;               // density scales by min(1, (falloff_range / r)^2)
    int clutter_points = 400;
    double occlusion_dropout = 0.3;
    double noise_sigma = 0.02;
    int frames = 5;
    int target = -1;  // -1: middle frame
    double min_sensor_gap = 0.5;

    int target_frame() const { return target < 0 ? frames / 2 : target; }

    void validate() const {
        if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("scene ranges are empty");
        if (objects_min < 0 || objects_max < objects_min) throw ConfigError("scene object count range is invalid");
        if (classes.empty()) throw ConfigError("scene needs at least one class template");
        for (const auto& c : classes)
            if (!(c.l > 0 && c.w > 0 && c.h > 0)) throw ConfigError("class template sizes must be positive");
        if (!(density > 0) || !(falloff_range > 0)) throw ConfigError("scene densities must be positive");
        if (size_jitter < 0 || size_jitter >= 1) throw ConfigError("size_jitter must be in [0, 1)");
        if (speed_min < 0 || speed_max < speed_min) throw ConfigError("speed range is invalid");
        if (clutter_points < 0 || noise_sigma < 0) throw ConfigError("clutter and noise must be non-negative");
        if (occlusion_dropout < 0 || occlusion_dropout > 1) throw ConfigError("occlusion_dropout must be in [0, 1]");
        if (frames < 1) throw ConfigError("frames must be >= 1");
        if (target_frame() >= frames) throw ConfigError("target frame outside the sequence");
    }
};

/// Tolerance for point-in-box checks: each noise axis is truncated at 3 sigma, so a
/// noisy surface point is at most 3 * sigma * sqrt(3) from the true surface.
inline double noise_bound(const SceneConfig& cfg) { return 3.0 * cfg.noise_sigma * std::sqrt(3.0); }

namespace detail {

struct Track {
    GtBox start;
    double vx, vy, yaw_rate;
    float reflectance;

    GtBox at(int frame) const {
        GtBox b = start;
        b.x = static_cast<float>(start.x + vx * frame);
        b.y = static_cast<float>(start.y + vy * frame);
        b.yaw = static_cast<float>(normalize_yaw(start.yaw + yaw_rate * frame));
        return b;
    }
};

inline double half_diagonal(const GtBox& b) { return 0.5 * std::hypot(b.l, b.w); }

inline bool inside_world(const GtBox& b, const SceneConfig& cfg) {
    const double r = half_diagonal(b);
    return b.x - r >= cfg.x_min && b.x + r <= cfg.x_max && b.y - r >= cfg.y_min && b.y + r <= cfg.y_max &&
           std::hypot(b.x, b.y) >= r + cfg.min_sensor_gap;
}

/// Uniform samples on the faces of `b` that face the sensor at the origin.
inline void sample_surface(const GtBox& b, float reflectance, const SceneConfig& cfg, Rng& rng,
                           std::vector<Point>& out) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double range = std::max(std::hypot(double(b.x), double(b.y)), 1e-6);
    const double falloff = std::min(1.0, std::pow(cfg.falloff_range / range, 2));
    struct Face {
        double nu, nv, nz;  // outward normal in box frame
        double area;
    };
    const Face faces[5] = {{1, 0, 0, b.w * b.h},
                           {-1, 0, 0, b.w * b.h},
                           {0, 1, 0, b.l * b.h},
                           {0, -1, 0, b.l * b.h},
                           {0, 0, 1, b.l * b.w}};
    for (const Face& f : faces) {
        const double cu = f.nu * b.l / 2, cv = f.nv * b.w / 2, cz = f.nz * b.h / 2;
        // World-frame face center and normal.
        const double fx = b.x + c * cu - s * cv, fy = b.y + s * cu + c * cv, fz = b.z + cz;
        const double nx = c * f.nu - s * f.nv, ny = s * f.nu + c * f.nv;
        if (nx * (0 - fx) + ny * (0 - fy) + f.nz * (0 - fz) <= 0) continue;
        const double expected = cfg.density * f.area * falloff;
        const int count = std::max(1, static_cast<int>(std::floor(expected + rng.uniform())));
        for (int k = 0; k < count; ++k) {
            double u = cu, v = cv, z = cz;
            const double a = rng.uniform(-0.5, 0.5), bb = rng.uniform(-0.5, 0.5);
            if (f.nu != 0) {
                v = a * b.w;
                z = bb * b.h;
            } else if (f.nv != 0) {
                u = a * b.l;
                z = bb * b.h;
            } else {
                u = a * b.l;
                v = bb * b.w;
            }
            const double bound = 3.0;
            const double px = b.x + c * u - s * v + cfg.noise_sigma * rng.truncated_normal(bound);
            const double py = b.y + s * u + c * v + cfg.noise_sigma * rng.truncated_normal(bound);
            const double pz = b.z + z + cfg.noise_sigma * rng.truncated_normal(bound);
            out.push_back({static_cast<float>(px), static_cast<float>(py), static_cast<float>(pz), reflectance});
        }
    }
}

}  // namespace detail

/// One synthetic sequence: rigidly moving boxes sampled as Lidar surface returns plus
/// ground clutter. Objects may vanish from non-target frames (occlusion dropout).
inline SequenceSample generate_sequence(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int n_obj = cfg.objects_min + static_cast<int>(rng.below(cfg.objects_max - cfg.objects_min + 1));
    std::vector<detail::Track> tracks;
    for (int k = 0; k < n_obj; ++k) {
        bool placed = false;
        const int cls = static_cast<int>(rng.below(cfg.classes.size()));
        const ClassTemplate& tpl = cfg.classes[cls];
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            auto jitter = [&] { return 1.0 + rng.uniform(-cfg.size_jitter, cfg.size_jitter); };
            detail::Track tr;
            tr.start.l = static_cast<float>(tpl.l * jitter());
            tr.start.w = static_cast<float>(tpl.w * jitter());
            tr.start.h = static_cast<float>(tpl.h * jitter());
            tr.start.z = static_cast<float>(cfg.ground_z + tr.start.h / 2.0);
            // Only centres whose footprint circle fits the world can be accepted.
            const double r = detail::half_diagonal(tr.start);
            tr.start.x = static_cast<float>(rng.uniform(cfg.x_min + r, std::max(cfg.x_min + r, cfg.x_max - r)));
            tr.start.y = static_cast<float>(rng.uniform(cfg.y_min + r, std::max(cfg.y_min + r, cfg.y_max - r)));
            tr.start.yaw = static_cast<float>(rng.uniform(-std::numbers::pi, std::numbers::pi));
            tr.start.class_id = cls;
            const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
            tr.vx = speed * std::cos(tr.start.yaw);
            tr.vy = speed * std::sin(tr.start.yaw);
            tr.yaw_rate = rng.uniform(-cfg.yaw_rate_max, cfg.yaw_rate_max);
            tr.reflectance = static_cast<float>(rng.uniform(0.3, 0.9));
            bool ok = true;
            for (int f = 0; f < cfg.frames && ok; ++f) {
                const GtBox b = tr.at(f);
                ok = detail::inside_world(b, cfg);
                for (const auto& other : tracks) {
                    const GtBox o = other.at(f);
                    if (std::hypot(b.x - o.x, b.y - o.y) < detail::half_diagonal(b) + detail::half_diagonal(o))
                        ok = false;
                }
            }
            if (ok) {
                tracks.push_back(tr);
                placed = true;
            }
        }
        if (!placed)
            throw GenerationError("could not place object " + std::to_string(k + 1) + " of " + std::to_string(n_obj) +
                                  " without overlap after 100 attempts");
    }

    SequenceSample seq;
    seq.target = cfg.target_frame();
    seq.frames.resize(cfg.frames);
    for (int f = 0; f < cfg.frames; ++f) {
        PointFrame& frame = seq.frames[f];
        for (const auto& tr : tracks) {
            const GtBox b = tr.at(f);
            frame.gt_boxes.push_back(b);
            const bool dropped = f != seq.target && rng.bernoulli(cfg.occlusion_dropout);
            if (!dropped) detail::sample_surface(b, tr.reflectance, cfg, rng, frame.points);
        }
        for (int k = 0; k < cfg.clutter_points; ++k) {
            const double z = cfg.ground_z + cfg.noise_sigma * rng.truncated_normal(3.0);
            frame.points.push_back({static_cast<float>(rng.uniform(cfg.x_min, cfg.x_max)),
                                    static_cast<float>(rng.uniform(cfg.y_min, cfg.y_max)), static_cast<float>(z),
                                    static_cast<float>(rng.uniform(0.0, 0.2))});
        }
    }
    return seq;
}

/// `count` sequences with per-sequence seeds derived from `seed`.
inline std::vector<SequenceSample> generate_dataset(const SceneConfig& cfg, int count, std::uint64_t seed) {
    std::vector<SequenceSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(generate_sequence(cfg, mix_seed(seed, static_cast<std::uint64_t>(i))));
    return out;
}

}  // namespace tctr::synth
