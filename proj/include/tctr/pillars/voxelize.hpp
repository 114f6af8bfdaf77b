// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "tctr/core/rng.hpp"
#include "tctr/pillars/grid.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::pillars {

/// Points grouped by occupied pillar. Buffers are padded to max_points per pillar;
/// pillars are ordered by flat cell index.
struct PillarSet {
    int max_points = 0;
    int grid_w = 0, grid_h = 0;
    std::vector<int> cells;     // row * grid_w + col
    std::vector<int> counts;    // valid points per pillar, <= max_points
    std::vector<Point> points;  // cells.size() * max_points, zero padded

    std::size_t size() const { return cells.size(); }
    int row(std::size_t p) const { return cells[p] / grid_w; }
    int col(std::size_t p) const { return cells[p] % grid_w; }
    const Point& point(std::size_t p, int i) const { return points[p * max_points + i]; }
};

inline bool in_grid(const GridConfig& g, const Point& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && p.x >= g.x_min && p.x < g.x_max &&
           p.y >= g.y_min && p.y < g.y_max && p.z >= g.z_min && p.z < g.z_max;
}

/// Flat cell index (row from y, column from x) of an in-range point.
inline int cell_of(const GridConfig& g, double x, double y) {
    const int w = g.width(), h = g.height();
    const int col = std::clamp(static_cast<int>(std::floor((x - g.x_min) / g.dx)), 0, w - 1);
    const int row = std::clamp(static_cast<int>(std::floor((y - g.y_min) / g.dy)), 0, h - 1);
    return row * w + col;
}

/// Drops out-of-range points and groups the rest into pillars. Points inside a pillar
/// are put in a canonical order first, so the result depends on the point multiset and
/// the seed but not on input order. Overflowing pillars keep a seeded random subset.
inline PillarSet voxelize(const PointFrame& frame, const GridConfig& cfg, Rng& rng) {
    cfg.validate();
    PillarSet ps;
    ps.max_points = cfg.max_points_per_pillar;
    ps.grid_w = cfg.width();
    ps.grid_h = cfg.height();

    std::vector<std::pair<int, Point>> keyed;
    keyed.reserve(frame.points.size());
    for (const auto& p : frame.points)
        if (in_grid(cfg, p)) keyed.emplace_back(cell_of(cfg, p.x, p.y), p);
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        return std::tie(a.first, a.second.x, a.second.y, a.second.z, a.second.r) <
               std::tie(b.first, b.second.x, b.second.y, b.second.z, b.second.r);
    });

    struct Group {
        int cell;
        std::size_t begin, end;
    };
    std::vector<Group> groups;
    for (std::size_t i = 0; i < keyed.size();) {
        std::size_t j = i;
        while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;
        groups.push_back({keyed[i].first, i, j});
        i = j;
    }
    if (static_cast<int>(groups.size()) > cfg.max_pillars) {
        std::vector<std::size_t> idx(groups.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (int k = 0; k < cfg.max_pillars; ++k) std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
        idx.resize(cfg.max_pillars);
        std::sort(idx.begin(), idx.end());
        std::vector<Group> kept;
        for (auto k : idx) kept.push_back(groups[k]);
        groups = std::move(kept);
    }

    const int cap = cfg.max_points_per_pillar;
    ps.points.assign(groups.size() * cap, Point{});
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const std::size_t n = g.end - g.begin;
        std::vector<std::size_t> pick(n);
        std::iota(pick.begin(), pick.end(), g.begin);
        if (n > static_cast<std::size_t>(cap)) {
            for (int k = 0; k < cap; ++k) std::swap(pick[k], pick[k + rng.below(n - k)]);
            pick.resize(cap);
            std::sort(pick.begin(), pick.end());
        }
        ps.cells.push_back(g.cell);
        ps.counts.push_back(static_cast<int>(pick.size()));
        for (std::size_t k = 0; k < pick.size(); ++k) ps.points[gi * cap + k] = keyed[pick[k]].second;
    }
    return ps;
}

}  // namespace tctr::pillars
