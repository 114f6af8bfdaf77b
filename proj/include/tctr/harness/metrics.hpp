// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tctr/head/detection.hpp"
#include "tctr/pillars/types.hpp"

namespace tctr::harness {

struct Counts {
    int tp = 0, fp = 0, fn = 0;
};

/// One scored prediction after matching: whether it claimed a ground truth.
struct ScoredMatch {
    double score = 0;
    bool tp = false;
};

/// 101-point interpolated AP: mean over r in {0, 0.01, ..., 1} of the best precision
/// reached at recall >= r. `matches` must already be in ranking order.
inline double average_precision_101(const std::vector<ScoredMatch>& matches, int n_gt) {
    if (n_gt <= 0) return 0.0;
    std::vector<double> recall, precision;
    int tp = 0;
    for (std::size_t i = 0; i < matches.size(); ++i) {
        tp += matches[i].tp ? 1 : 0;
        recall.push_back(static_cast<double>(tp) / n_gt);
        precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    // Suffix maximum of precision gives the interpolated envelope.
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0;
    std::size_t k = 0;
    for (int j = 0; j <= 100; ++j) {
        const double r = j / 100.0;
        while (k < recall.size() && recall[k] < r - 1e-12) ++k;
        if (k < recall.size()) ap += precision[k];
    }
    return ap / 101.0;
}

/// Greedy one-to-one matching inside one frame: predictions in descending score claim the
/// nearest unclaimed same-class ground truth whose BEV centre distance is strictly below
/// `threshold`. Returns one flag per prediction, in the input order.
inline std::vector<bool> match_frame(const std::vector<head::Detection>& preds, const std::vector<GtBox>& gts,
                                     int class_id, double threshold) {
    std::vector<int> order;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].box.class_id == class_id) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return preds[a].score > preds[b].score; });
    std::vector<bool> taken(gts.size(), false), tp(preds.size(), false);
    for (int i : order) {
        int best = -1;
        double best_d = threshold;
        for (std::size_t k = 0; k < gts.size(); ++k) {
            if (taken[k] || gts[k].class_id != class_id) continue;
            const double d = std::hypot(double(preds[i].box.x) - gts[k].x, double(preds[i].box.y) - gts[k].y);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        if (best >= 0) {
            taken[best] = true;
            tp[i] = true;
        }
    }
    return tp;
}

struct EvalReport {
    std::vector<double> thresholds;
    int classes = 0;
    std::vector<std::vector<double>> ap;  // [threshold][class]; NaN when the class has no ground truth
    std::vector<std::vector<Counts>> counts;
    std::vector<int> gt_per_class;
    double map = 0;
    double seconds = 0;

    bool has_class(int c) const { return gt_per_class[c] > 0; }

    /// Mean AP over classes with ground truth at one threshold.
    double map_at(std::size_t ti) const {
        double s = 0;
        int n = 0;
        for (int c = 0; c < classes; ++c)
            if (has_class(c)) {
                s += ap[ti][c];
                ++n;
            }
        return n ? s / n : 0.0;
    }

    /// Mean AP of one class over the thresholds.
    double class_ap(int c) const {
        if (!has_class(c)) return std::numeric_limits<double>::quiet_NaN();
        double s = 0;
        for (std::size_t t = 0; t < thresholds.size(); ++t) s += ap[t][c];
        return s / static_cast<double>(thresholds.size());
    }

    std::size_t threshold_index(double thr) const {
        for (std::size_t t = 0; t < thresholds.size(); ++t)
            if (std::abs(thresholds[t] - thr) < 1e-12) return t;
        throw ContractError("threshold " + std::to_string(thr) + " was not evaluated");
    }
};

/// AP, counts and mAP over a set of frames. mAP averages over thresholds and over the
/// classes that have ground truth.
inline EvalReport score_detections(const std::vector<std::vector<head::Detection>>& preds,
                                   const std::vector<std::vector<GtBox>>& gts, int classes,
                                   const std::vector<double>& thresholds) {
    if (preds.size() != gts.size()) throw ContractError("score_detections: prediction and gt frame counts differ");
    EvalReport r;
    r.thresholds = thresholds;
    r.classes = classes;
    r.gt_per_class.assign(classes, 0);
    for (const auto& frame : gts)
        for (const auto& g : frame)
            if (g.class_id >= 0 && g.class_id < classes) ++r.gt_per_class[g.class_id];
    r.ap.assign(thresholds.size(), std::vector<double>(classes, std::numeric_limits<double>::quiet_NaN()));
    r.counts.assign(thresholds.size(), std::vector<Counts>(classes));
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        for (int c = 0; c < classes; ++c) {
            std::vector<ScoredMatch> all;
            for (std::size_t f = 0; f < preds.size(); ++f) {
                const auto tp = match_frame(preds[f], gts[f], c, thresholds[ti]);
                for (std::size_t i = 0; i < preds[f].size(); ++i)
                    if (preds[f][i].box.class_id == c) all.push_back({preds[f][i].score, tp[i]});
            }
            std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
            Counts& k = r.counts[ti][c];
            for (const auto& m : all) (m.tp ? k.tp : k.fp) += 1;
            k.fn = r.gt_per_class[c] - k.tp;
            if (r.has_class(c)) r.ap[ti][c] = average_precision_101(all, r.gt_per_class[c]);
        }
    }
    double s = 0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) s += r.map_at(ti);
    r.map = thresholds.empty() ? 0.0 : s / static_cast<double>(thresholds.size());
    return r;
}

}  // namespace tctr::harness
