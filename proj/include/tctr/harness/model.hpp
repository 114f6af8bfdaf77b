// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tctr/backbone/backbone.hpp"
#include "tctr/harness/config.hpp"
#include "tctr/head/anchors.hpp"
#include "tctr/head/detection.hpp"
#include "tctr/head/losses.hpp"
#include "tctr/head/refine.hpp"
#include "tctr/pillars/pfn.hpp"
#include "tctr/pillars/voxelize.hpp"
#include "tctr/transformer/tctr.hpp"

namespace tctr::harness {

inline constexpr const char* kAnchorStats = "anchors.stats";

/// Anchor templates from the scene class sizes, resting on the ground plane.
inline std::vector<head::AnchorStats> default_anchor_stats(const RunConfig& c) {
    std::vector<head::AnchorStats> out;
    for (const auto& t : c.scene.classes)
        out.push_back({t.l, t.w, t.h, static_cast<float>(c.scene.ground_z + t.h / 2.0)});
    return out;
}

template <typename T>
void set_anchor_stats(num::ParamStore<T>& s, const std::vector<head::AnchorStats>& stats) {
    num::Tensor<T> v({static_cast<int>(stats.size()), 4});
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const int r = static_cast<int>(i);
        v.at(r, 0) = static_cast<T>(stats[i].l);
        v.at(r, 1) = static_cast<T>(stats[i].w);
        v.at(r, 2) = static_cast<T>(stats[i].h);
        v.at(r, 3) = static_cast<T>(stats[i].z);
    }
    s.set_buffer(kAnchorStats, std::move(v));
}

template <typename T>
std::vector<head::AnchorStats> anchor_stats(const num::ParamStore<T>& s) {
    const auto& v = s.value(kAnchorStats);
    std::vector<head::AnchorStats> out;
    for (int r = 0; r < v.dim(0); ++r)
        out.push_back({static_cast<float>(v.at(r, 0)), static_cast<float>(v.at(r, 1)), static_cast<float>(v.at(r, 2)),
                       static_cast<float>(v.at(r, 3))});
    return out;
}

template <typename T>
head::AnchorGrid anchor_grid(const RunConfig& c, const num::ParamStore<T>& s) {
    return head::AnchorGrid::make(c.grid, c.out_rows(), c.out_cols(), anchor_stats(s));
}

/// Declares every parameter the configured model reads, plus the anchor-stats buffer.
template <typename T>
void declare_model(num::ParamStore<T>& s, const RunConfig& c) {
    const int c1 = c.tctr.c1;
    pillars::declare_pfn(s, c.pfn_channels);
    backbone::declare_backbone(s, c.backbone);
    if (c.temporal == Temporal::concat) {
        s.declare("concat.w", {c1, c1 * c.frames(), 1, 1}, num::Init::kaiming);
        s.declare("concat.b", {c1}, num::Init::zeros);
    }
    if (c.uses_tctr()) {
        transformer::declare_tctr(s, c.tctr);
        head::declare_fusion(s, c.fusion, c1);
    }
    const bool gated = c.uses_tctr() && c.fusion == head::FusionMode::gate;
    head::declare_refine(s, c1, c.refine_width, c.refine_stages, gated, c1);
    head::declare_head(s, c.refine_stages > 0 ? c.refine_width : c1, c.anchors_per_location());
    if (!s.contains(kAnchorStats)) set_anchor_stats(s, default_anchor_stats(c));
}

template <typename T>
num::ParamStore<T> make_model(const RunConfig& c) {
    num::ParamStore<T> s(c.seed);
    declare_model(s, c);
    return s;
}

/// Pillar sets of the 2T+1 frames around the target (only the target without a temporal module).
inline std::vector<pillars::PillarSet> voxelize_window(const SequenceSample& seq, const RunConfig& c, Rng& rng) {
    std::vector<pillars::PillarSet> out;
    for (const PointFrame* f : seq.window(c.radius())) out.push_back(pillars::voxelize(*f, c.grid, rng));
    return out;
}

template <typename T>
struct ModelOutputs {
    head::HeadOutputs<T> head;
    num::Var<T> x_t;
    std::optional<num::Var<T>> g;
};

/// Window pillars -> per-frame PFN + backbone -> temporal module -> fusion -> refine -> head.
template <typename T>
ModelOutputs<T> model_forward(num::Tape<T>& t, const num::ParamStore<T>& s, const RunConfig& c,
                              const std::vector<pillars::PillarSet>& window,
                              transformer::AttentionProbe<T>* probe = nullptr) {
    if (static_cast<int>(window.size()) != c.frames())
        throw ShapeError("model: expected " + std::to_string(c.frames()) + " frames, got " +
                         std::to_string(window.size()));
    std::vector<num::Var<T>> xs;
    for (const auto& ps : window)
        xs.push_back(backbone::backbone_forward(t, s, c.backbone, pillars::pfn_forward(t, s, ps, c.grid)));
    ModelOutputs<T> out;
    out.x_t = xs[c.radius()];
    num::Var<T> f = out.x_t;
    if (c.temporal == Temporal::concat) {
        f = num::conv2d(num::concat0(xs), t.param(s, "concat.w"), t.param(s, "concat.b"));
    } else if (c.uses_tctr()) {
        auto mem = transformer::encode_variant(t, s, xs, c.tctr, probe);
        out.g = transformer::decode_spatial(t, s, out.x_t, mem, c.tctr, probe);
        f = head::fuse_variant(t, s, out.x_t, *out.g, c.fusion);
    }
    const bool gated = c.uses_tctr() && c.fusion == head::FusionMode::gate;
    f = head::upsample_refine(t, s, f, gated ? &*out.g : nullptr, c.refine_stages);
    out.head = head::head_forward(t, s, f, c.anchors_per_location());
    return out;
}

struct LossParts {
    double cls = 0, loc = 0, dir = 0, total = 0;
    int positives = 0;
};

/// (b_cls L_cls + b_loc L_loc + b_dir L_dir) / max(n_pos, 1) with every term summed over anchors.
template <typename T>
num::Var<T> detection_loss(const head::HeadOutputs<T>& h, const head::TargetAssignment& ta, const RunConfig& c,
                           LossParts& parts) {
    const int n_pos = ta.positives();
    const T norm = static_cast<T>(1.0 / std::max(n_pos, 1));
    auto l_cls = head::sigmoid_focal_sum(h.cls, ta.label, c.focal_gamma);
    auto total = num::scale(l_cls, static_cast<T>(c.beta.cls));
    parts = {};
    parts.positives = n_pos;
    parts.cls = static_cast<double>(l_cls.value()[0]);
    if (n_pos > 0) {
        std::vector<int> rows, dirs;
        num::Tensor<T> target({n_pos, head::kBoxDims});
        for (std::size_t i = 0; i < ta.label.size(); ++i) {
            if (ta.label[i] != 1) continue;
            const int r = static_cast<int>(rows.size());
            for (int j = 0; j < head::kBoxDims; ++j) target.at(r, j) = static_cast<T>(ta.residual[i][j]);
            rows.push_back(static_cast<int>(i));
            dirs.push_back(ta.direction[i]);
        }
        auto l_loc = head::smooth_l1_sum(num::gather_rows(h.box, rows), target);
        auto l_dir = num::softmax_cross_entropy(num::gather_rows(h.dir, rows), dirs);
        parts.loc = static_cast<double>(l_loc.value()[0]);
        parts.dir = static_cast<double>(l_dir.value()[0]);
        total = num::add(total, num::scale(l_loc, static_cast<T>(c.beta.loc)));
        total = num::add(total, num::scale(l_dir, static_cast<T>(c.beta.dir)));
    }
    total = num::scale(total, norm);
    parts.cls /= std::max(n_pos, 1);
    parts.loc /= std::max(n_pos, 1);
    parts.dir /= std::max(n_pos, 1);
    parts.total = static_cast<double>(total.value()[0]);
    return total;
}

/// Per-frame seed for pillar subsampling so that evaluation and rendering are reproducible.
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
    return mix_seed(mix_seed(seed, salt), index);
}

template <typename T>
std::vector<head::Detection> detect(const num::ParamStore<T>& s, const RunConfig& c, const SequenceSample& seq,
                                    std::uint64_t voxel_seed) {
    Rng rng(voxel_seed);
    const auto window = voxelize_window(seq, c, rng);
    num::Tape<T> t;
    const auto out = model_forward(t, s, c, window);
    return head::decode_and_nms(out.head.cls.value(), out.head.box.value(), out.head.dir.value(), anchor_grid(c, s),
                                c.nms);
}

}  // namespace tctr::harness
