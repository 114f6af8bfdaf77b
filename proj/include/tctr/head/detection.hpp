// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "tctr/head/anchors.hpp"
#include "tctr/numerics/ops.hpp"
#include "tctr/numerics/params.hpp"

namespace tctr::head {

struct Detection {
    GtBox box;
    float score = 0;
};

struct NmsConfig {
    double score_threshold = 0.1;
    double iou_threshold = 0.5;
    int max_detections = 100;
};

/// Per-anchor head outputs: cls [n x 1], box [n x 7], dir [n x 2], n = H*W*anchors.
template <typename T>
struct HeadOutputs {
    num::Var<T> cls, box, dir;
};

template <typename T>
void declare_head(num::ParamStore<T>& s, int c_in, int anchors_per_loc, const std::string& p = "head") {
    s.declare(p + ".cls.w", {anchors_per_loc, c_in, 1, 1}, num::Init::linear);
    s.declare(p + ".cls.b", {anchors_per_loc}, num::Init::zeros);
    s.declare(p + ".box.w", {anchors_per_loc * kBoxDims, c_in, 1, 1}, num::Init::linear);
    s.declare(p + ".box.b", {anchors_per_loc * kBoxDims}, num::Init::zeros);
    s.declare(p + ".dir.w", {anchors_per_loc * 2, c_in, 1, 1}, num::Init::linear);
    s.declare(p + ".dir.b", {anchors_per_loc * 2}, num::Init::zeros);
}

/// Three 1x1 conv branches, reshaped to one row per anchor.
template <typename T>
HeadOutputs<T> head_forward(num::Tape<T>& t, const num::ParamStore<T>& s, const num::Var<T>& f,
                            int anchors_per_loc, const std::string& p = "head") {
    auto branch = [&](const std::string& name, int k) {
        auto y = num::conv2d(f, t.param(s, p + "." + name + ".w"), t.param(s, p + "." + name + ".b"));
        return num::anchor_view(y, anchors_per_loc, k);
    };
    return {branch("cls", 1), branch("box", kBoxDims), branch("dir", 2)};
}

/// Sigmoid scores above the threshold, decoded boxes, greedy per-class NMS on the IoU of
/// the enclosing axis-aligned BEV rectangles.
/// Output is sorted by descending score and capped at max_detections.
template <typename T>
std::vector<Detection> decode_and_nms(const num::Tensor<T>& cls, const num::Tensor<T>& box,
                                      const num::Tensor<T>& dir, const AnchorGrid& anchors, const NmsConfig& cfg = {}) {
    const int n = anchors.size();
    if (cls.size() != static_cast<std::size_t>(n) || box.size() != static_cast<std::size_t>(n) * kBoxDims ||
        dir.size() != static_cast<std::size_t>(n) * 2)
        throw ShapeError("decode_and_nms: head outputs do not match " + std::to_string(n) + " anchors");
    std::vector<std::vector<Detection>> per_class(anchors.classes);
    for (int i = 0; i < n; ++i) {
        const double score = num::sigmoid_scalar(static_cast<double>(cls[i]));
        if (score < cfg.score_threshold) continue;
        std::array<double, kBoxDims> r;
        for (int j = 0; j < kBoxDims; ++j) r[j] = box[static_cast<std::size_t>(i) * kBoxDims + j];
        const int d = dir[static_cast<std::size_t>(i) * 2 + 1] > dir[static_cast<std::size_t>(i) * 2] ? 1 : 0;
        per_class[anchors.class_of(i)].push_back({decode_box(r, anchors.anchor(i), d), static_cast<float>(score)});
    }
    std::vector<Detection> out;
    for (auto& cand : per_class) {
        std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
        std::vector<Detection> kept;
        for (const auto& c : cand) {
            bool keep = true;
            for (const auto& k : kept)
                if (standup_iou(c.box, k.box) > cfg.iou_threshold) {
                    keep = false;
                    break;
                }
            if (keep) kept.push_back(c);
            if (static_cast<int>(kept.size()) >= cfg.max_detections) break;
        }
        out.insert(out.end(), kept.begin(), kept.end());
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    if (static_cast<int>(out.size()) > cfg.max_detections) out.resize(cfg.max_detections);
    return out;
}

}  // namespace tctr::head
