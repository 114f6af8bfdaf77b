// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tctr/harness/model.hpp"
#include "tctr/synth/scene.hpp"

namespace tctr::harness {

using LossFn = std::function<num::Var<double>(num::Tape<double>&, const num::ParamStore<double>&)>;

struct GradcheckOptions {
    int samples = 3;         // entries per tensor; <= 0 checks every entry
    double step = 1e-5;      // central-difference half width
    double floor = 1e-4;     // denominator floor of the relative error
    double tolerance = 1e-4;
    std::uint64_t seed = 1;
};

struct GradcheckEntry {
    std::string name;
    double max_rel_error = 0;
    std::size_t checked = 0;
    std::size_t refined = 0;  // entries re-measured with other step widths
};

struct GradcheckReport {
    std::vector<GradcheckEntry> params;
    std::map<std::string, double> groups;
    double max_rel_error = 0;
    double tolerance = 0;
    double loss = 0;
    double seconds = 0;

    bool passed() const { return std::isfinite(max_rel_error) && max_rel_error < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
    const double d = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / d;
}

/// Parameter name without its last component, truncated to two components.
inline std::string param_group(const std::string& name) {
    auto cut = name.rfind('.');
    std::string g = cut == std::string::npos ? name : name.substr(0, cut);
    const auto first = g.find('.');
    if (first != std::string::npos) {
        const auto second = g.find('.', first + 1);
        if (second != std::string::npos) g.resize(second);
    }
    return g;
}

/// Step exponents tried, in order, when the central difference at the base step disagrees.
inline constexpr int kStepExponents[] = {0, 1, -1, 2, -2, 3, -3, 4, -4, 5, -5};

/// Compares backprop gradients of every trainable tensor to central differences of `loss`.
inline GradcheckReport check_gradients(num::ParamStore<double>& store, const LossFn& loss,
                                       const GradcheckOptions& o = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckReport r;
    r.tolerance = o.tolerance;
    {
        num::Tape<double> tape;
        auto l = loss(tape, store);
        r.loss = l.value()[0];
        num::backward(l, tape, store);
    }
    auto eval = [&] {
        num::Tape<double> tape;
        return loss(tape, store).value()[0];
    };
    Rng rng(o.seed);
    for (const auto& name : store.names()) {
        auto& e = store.entry(name);
        if (!e.trainable) continue;
        std::vector<std::size_t> idx;
        if (o.samples <= 0 || e.value.size() <= static_cast<std::size_t>(o.samples)) {
            for (std::size_t i = 0; i < e.value.size(); ++i) idx.push_back(i);
        } else {
            for (int k = 0; k < o.samples; ++k) idx.push_back(rng.below(e.value.size()));
        }
        GradcheckEntry ge{name, 0.0, idx.size(), 0};
        for (auto i : idx) {
            // Losses at value + sign * step * 2^k, cached per exponent.
            std::map<int, std::pair<double, double>> shifted;
            auto at = [&](int k) -> const std::pair<double, double>& {
                auto it = shifted.find(k);
                if (it != shifted.end()) return it->second;
                const double orig = e.value[i], h = std::ldexp(o.step, k);
                e.value[i] = orig + h;
                const double fp = eval();
                e.value[i] = orig - h;
                const double fm = eval();
                e.value[i] = orig;
                return shifted.emplace(k, std::make_pair(fp, fm)).first->second;
            };
            auto central = [&](int k) { return (at(k).first - at(k).second) / (2 * std::ldexp(o.step, k)); };
            double err = relative_error(e.grad[i], central(0), o.floor);
            // A kink within the stencil biases the central quotient. Smaller steps avoid distant
            // kinks, larger ones cancellation, and second-order one-sided quotients the side a
            // kink is on. A wrong backward disagrees with all of them.
            if (std::isfinite(err) && err >= o.tolerance) {
                ++ge.refined;
                for (int k : kStepExponents) {
                    const double h = std::ldexp(o.step, k);
                    const double forward = (-3 * r.loss + 4 * at(k).first - at(k + 1).first) / (2 * h);
                    const double backward = (3 * r.loss - 4 * at(k).second + at(k + 1).second) / (2 * h);
                    for (double d : {central(k), forward, backward})
                        err = std::min(err, relative_error(e.grad[i], d, o.floor));
                    if (err < o.tolerance) break;
                }
            }
            ge.max_rel_error = std::isnan(err) ? INFINITY : std::max(ge.max_rel_error, err);
        }
        auto& g = r.groups[param_group(name)];
        g = std::max(g, ge.max_rel_error);
        r.max_rel_error = std::max(r.max_rel_error, ge.max_rel_error);
        r.params.push_back(std::move(ge));
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Shrinks a config to the smallest full pipeline: 32x32 pillars, narrow layers, one block each.
inline RunConfig tiny_config(RunConfig c) {
    c.grid.dx = c.grid.dy = (c.grid.x_max - c.grid.x_min) / 32;
    c.grid.max_points_per_pillar = 8;
    c.pfn_channels = 8;
    c.backbone.stem_width = 8;
    c.backbone.block_widths = {8, 8, 16, 16};
    c.backbone.out_channels = 16;
    c.tctr.c2 = 4;
    c.tctr.c3 = 8;
    c.tctr.enc_blocks = 1;
    c.tctr.dec_blocks = 1;
    c.tctr.heads = 2;
    c.tctr.dk = 4;
    c.tctr.ffn_hidden = 16;
    c.refine_width = 8;
    c.refine_stages = 1;
    c.resolve();
    return c;
}

/// Zero-initialised tensors put every empty pillar exactly on a ReLU kink; finite
/// differences are only meaningful away from it.
inline void jitter_zero_params(num::ParamStore<double>& store, std::uint64_t seed, double scale = 0.05) {
    Rng rng(mix_seed(seed, fnv1a64("gradcheck.jitter")));
    for (const auto& name : store.names()) {
        auto& e = store.entry(name);
        if (!e.trainable) continue;
        if (std::any_of(e.value.data().begin(), e.value.data().end(), [](double v) { return v != 0.0; })) continue;
        for (auto& v : e.value.data()) v = rng.uniform(-scale, scale);
    }
}

/// One unaugmented synthetic sequence and the loss of the full model on it, evaluated at
/// the initial parameters with zero tensors jittered.
inline GradcheckReport gradcheck_model(const RunConfig& c, const GradcheckOptions& o) {
    const SequenceSample seq = synth::generate_sequence(c.scene, mix_seed(c.seed, fnv1a64("gradcheck")));
    num::ParamStore<double> store = make_model<double>(c);
    jitter_zero_params(store, c.seed);
    const auto& gts = seq.frames[seq.target].gt_boxes;
    set_anchor_stats(store, head::mean_box_stats(gts, c.classes(), default_anchor_stats(c)));
    Rng rng(mix_seed(c.seed, fnv1a64("gradcheck.voxels")));
    const auto window = voxelize_window(seq, c, rng);
    const auto ta = head::assign_targets(anchor_grid(c, store), gts, c.match);
    return check_gradients(
        store,
        [&](num::Tape<double>& t, const num::ParamStore<double>& s) {
            LossParts parts;
            return detection_loss(model_forward(t, s, c, window).head, ta, c, parts);
        },
        o);
}

/// Head convolutions over a fixed random feature map: every layer is linear, only the
/// loss is not.
inline GradcheckReport gradcheck_toy(const RunConfig& c, const GradcheckOptions& o) {
    const int channels = 8, rows = 8, cols = 8;
    const SequenceSample seq = synth::generate_sequence(c.scene, mix_seed(c.seed, fnv1a64("gradcheck")));
    const auto& gts = seq.frames[seq.target].gt_boxes;
    num::ParamStore<double> store(c.seed);
    head::declare_head(store, channels, c.anchors_per_location());
    const auto anchors = head::AnchorGrid::make(c.grid, rows, cols, head::mean_box_stats(gts, c.classes(),
                                                                                         default_anchor_stats(c)));
    const auto ta = head::assign_targets(anchors, gts, c.match);
    num::Tensor<double> features({channels, rows, cols});
    Rng rng(mix_seed(c.seed, fnv1a64("gradcheck.toy")));
    for (auto& v : features.data()) v = rng.uniform(-1.0, 1.0);
    return check_gradients(
        store,
        [&](num::Tape<double>& t, const num::ParamStore<double>& s) {
            LossParts parts;
            auto f = t.constant(features);
            return detection_loss(head::head_forward(t, s, f, c.anchors_per_location()), ta, c, parts);
        },
        o);
}

/// Preset "toy", "tiny" or "desk" (the configuration as given).
inline GradcheckReport gradcheck(const RunConfig& c, const std::string& preset, const GradcheckOptions& o) {
    if (preset == "toy") return gradcheck_toy(c, o);
    if (preset == "tiny") return gradcheck_model(tiny_config(c), o);
    if (preset == "desk") return gradcheck_model(c, o);
    throw ConfigError("unknown gradcheck preset '" + preset + "' (expected toy, tiny or desk)");
}

inline void write_gradcheck(std::ostream& out, const GradcheckReport& r) {
    out << std::setprecision(6);
    for (const auto& p : r.params)
        out << "param=" << p.name << " checked=" << p.checked << " refined=" << p.refined << " max_rel_err=" << p.max_rel_error << "\n";
    for (const auto& [g, v] : r.groups) out << "group=" << g << " max_rel_err=" << v << "\n";
    out << "loss=" << std::setprecision(12) << r.loss << std::setprecision(6) << "\n";
    out << "max_rel_err=" << r.max_rel_error << "\n";
    out << "tolerance=" << r.tolerance << "\n";
    out << "seconds=" << r.seconds << "\n";
    out << "result=" << (r.passed() ? "pass" : "fail") << "\n";
}

}  // namespace tctr::harness
