// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tctr/harness/metrics.hpp"
#include "tctr/harness/model.hpp"

namespace tctr::harness {

inline constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

/// Detections on the target frame of every sequence.
template <typename T>
std::vector<std::vector<head::Detection>> infer(const num::ParamStore<T>& s, const RunConfig& c,
                                                const std::vector<SequenceSample>& data) {
    std::vector<std::vector<head::Detection>> out;
    for (std::size_t i = 0; i < data.size(); ++i) out.push_back(detect(s, c, data[i], sample_seed(c.seed, i, kEvalSalt)));
    return out;
}

template <typename T>
EvalReport evaluate(const num::ParamStore<T>& s, const RunConfig& c, const std::vector<SequenceSample>& data) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto preds = infer(s, c, data);
    std::vector<std::vector<GtBox>> gts;
    for (const auto& seq : data) gts.push_back(seq.frames.at(seq.target).gt_boxes);
    EvalReport r = score_detections(preds, gts, c.classes(), c.eval_thresholds);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline std::string format_threshold(double t) {
    std::ostringstream out;
    out << t;
    return out.str();
}

/// Line-based key=value report.
inline void write_report(std::ostream& out, const EvalReport& r) {
    out << std::setprecision(9);
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
        const std::string thr = format_threshold(r.thresholds[t]);
        for (int c = 0; c < r.classes; ++c) {
            const auto& k = r.counts[t][c];
            out << "threshold=" << thr << " class=" << c << " gt=" << r.gt_per_class[c] << " tp=" << k.tp
                << " fp=" << k.fp << " fn=" << k.fn << " ap=";
            if (r.has_class(c)) out << r.ap[t][c];
            else out << "na";
            out << "\n";
        }
        out << "threshold=" << thr << " map=" << r.map_at(t) << "\n";
    }
    out << "map=" << r.map << "\n";
    out << "eval_seconds=" << r.seconds << "\n";
}

}  // namespace tctr::harness
