// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "tctr/harness/config.hpp"
#include "tctr/harness/model.hpp"
#include "tctr/numerics/adam.hpp"
#include "tctr/pillars/augment.hpp"

namespace tctr::harness {

/// One-cycle learning rate: cosine from lr/start_div up to lr over the warm-up fraction
/// of the steps, then cosine down to lr/end_div at the last step.
inline double one_cycle_lr(const TrainConfig& c, int step, int steps) {
    const double lo = c.lr / c.start_div, hi = c.lr, end = c.lr / c.end_div;
    if (steps <= 1) return lo;
    const double p = static_cast<double>(step) / (steps - 1);
    const double w = c.warmup_fraction;
    if (p <= w) return lo + (hi - lo) * 0.5 * (1.0 - std::cos(std::numbers::pi * p / w));
    return end + (hi - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * (p - w) / (1.0 - w)));
}

struct StepLog {
    int step = 0;  // 1-based
    double lr = 0;
    double cls = 0, loc = 0, dir = 0, total = 0;
};

inline std::string format_step(const StepLog& s) {
    std::ostringstream out;
    out << std::setprecision(9) << "step=" << s.step << " lr=" << s.lr << " l_cls=" << s.cls << " l_loc=" << s.loc
        << " l_dir=" << s.dir << " total=" << s.total;
    return out.str();
}

/// Target-frame boxes of every sequence.
inline std::vector<GtBox> target_boxes(const std::vector<SequenceSample>& data) {
    std::vector<GtBox> out;
    for (const auto& s : data) {
        const auto& b = s.frames.at(s.target).gt_boxes;
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

/// Mean batch loss of the given sequences on one tape. Augmentation and pillar
/// subsampling draw from `rng`.
template <typename T>
num::Var<T> batch_loss(num::Tape<T>& tape, const num::ParamStore<T>& store, const RunConfig& c,
                       const std::vector<const SequenceSample*>& batch, Rng& rng, bool augment, LossParts& mean) {
    const auto anchors = anchor_grid(c, store);
    std::optional<num::Var<T>> total;
    mean = {};
    for (const SequenceSample* seq : batch) {
        SequenceSample aug;
        const SequenceSample* src = seq;
        if (augment) {
            aug = pillars::augment_sequence(*seq, c.aug, rng);
            src = &aug;
        }
        const auto window = voxelize_window(*src, c, rng);
        const auto out = model_forward(tape, store, c, window);
        const auto ta = head::assign_targets(anchors, src->frames[src->target].gt_boxes, c.match);
        LossParts parts;
        auto l = detection_loss(out.head, ta, c, parts);
        total = total ? num::add(*total, l) : l;
        mean.cls += parts.cls;
        mean.loc += parts.loc;
        mean.dir += parts.dir;
        mean.positives += parts.positives;
    }
    const double n = static_cast<double>(batch.size());
    mean.cls /= n;
    mean.loc /= n;
    mean.dir /= n;
    auto loss = num::scale(*total, static_cast<T>(1.0 / n));
    mean.total = static_cast<double>(loss.value()[0]);
    return loss;
}

struct TrainResult {
    num::ParamStore<float> store;
    std::vector<StepLog> log;
    double wall_seconds = 0;

    double initial_loss() const { return log.empty() ? 0.0 : log.front().total; }
    double final_loss() const { return log.empty() ? 0.0 : log.back().total; }
};

/// Epoch-wise shuffled minibatches over the training set, Adam with the one-cycle schedule.
/// `on_step` sees every step; a non-finite loss aborts with the step index.
inline TrainResult train(const RunConfig& c, const std::vector<SequenceSample>& data,
                         const std::function<void(const StepLog&)>& on_step = {}) {
    if (data.empty()) throw ContractError("train: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r{make_model<float>(c), {}, 0};
    set_anchor_stats(r.store, head::mean_box_stats(target_boxes(data), c.classes(), default_anchor_stats(c)));
    num::Adam<float> adam(c.train.adam);
    Rng rng(mix_seed(c.seed, fnv1a64("train")));
    std::vector<int> order;
    std::size_t cursor = 0;
    const bool augment = c.train.augment && c.aug.enabled;
    StepLog last_finite;
    for (int step = 0; step < c.train.steps; ++step) {
        std::vector<const SequenceSample*> batch;
        while (static_cast<int>(batch.size()) < c.train.batch) {
            if (cursor == order.size()) {
                order.resize(data.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
                for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
                cursor = 0;
            }
            batch.push_back(&data[order[cursor++]]);
        }
        StepLog s;
        s.step = step + 1;
        s.lr = one_cycle_lr(c.train, step, c.train.steps);
        try {
            num::Tape<float> tape;
            LossParts parts;
            auto loss = batch_loss(tape, r.store, c, batch, rng, augment, parts);
            s.cls = parts.cls;
            s.loc = parts.loc;
            s.dir = parts.dir;
            s.total = parts.total;
            if (!std::isfinite(s.total)) throw NumericError("non-finite total loss");
            num::backward(loss, tape, r.store);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at step " + std::to_string(s.step) + ": " + e.what() +
                               "; last finite losses: " + (last_finite.step ? format_step(last_finite) : "none"));
        }
        adam.step(r.store, s.lr);
        last_finite = s;
        r.log.push_back(s);
        if (on_step) on_step(s);
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace tctr::harness
