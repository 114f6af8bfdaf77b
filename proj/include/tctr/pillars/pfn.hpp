// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tctr/numerics/ops.hpp"
#include "tctr/numerics/params.hpp"
#include "tctr/pillars/voxelize.hpp"

namespace tctr::pillars {

inline constexpr int kPointFeatures = 9;

template <typename T>
void declare_pfn(num::ParamStore<T>& store, int c0, const std::string& prefix = "pfn") {
    store.declare(prefix + ".w", {kPointFeatures, c0}, num::Init::kaiming);
    store.declare(prefix + ".b", {c0}, num::Init::zeros);
}

/// Per-point decorated features [valid points x 9]: x, y, z, r, offsets to the
/// pillar point mean, offsets to the pillar cell center. Rows follow pillar order.
template <typename T>
num::Tensor<T> decorate_points(const PillarSet& ps, const GridConfig& cfg) {
    int total = 0;
    for (int c : ps.counts) total += c;
    num::Tensor<T> f({std::max(total, 1), kPointFeatures});
    int row = 0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
        const int n = ps.counts[p];
        double mx = 0, my = 0, mz = 0;
        for (int i = 0; i < n; ++i) {
            mx += ps.point(p, i).x;
            my += ps.point(p, i).y;
            mz += ps.point(p, i).z;
        }
        mx /= n;
        my /= n;
        mz /= n;
        const double cx = cfg.x_min + (ps.col(p) + 0.5) * cfg.dx;
        const double cy = cfg.y_min + (ps.row(p) + 0.5) * cfg.dy;
        for (int i = 0; i < n; ++i, ++row) {
            const Point& q = ps.point(p, i);
            const double v[kPointFeatures] = {q.x, q.y, q.z, q.r, q.x - mx, q.y - my, q.z - mz, q.x - cx, q.y - cy};
            for (int j = 0; j < kPointFeatures; ++j) f.at(row, j) = static_cast<T>(v[j]);
        }
    }
    return f;
}

/// Pillar Feature Network: shared linear + ReLU per point, max per pillar, scatter
/// into a C0 x H0 x W0 pseudo-image. Empty cells are zero.
template <typename T>
num::Var<T> pfn_forward(num::Tape<T>& tape, const num::ParamStore<T>& store, const PillarSet& ps,
                        const GridConfig& cfg, const std::string& prefix = "pfn") {
    auto w = tape.param(store, prefix + ".w");
    auto b = tape.param(store, prefix + ".b");
    std::vector<int> offsets{0};
    for (int c : ps.counts) offsets.push_back(offsets.back() + c);
    auto x = tape.constant(decorate_points<T>(ps, cfg));
    auto h = num::relu(num::add_row_bias(num::matmul(x, w), b));
    return num::segment_max_scatter(h, offsets, ps.cells, cfg.height(), cfg.width());
}

}  // namespace tctr::pillars
