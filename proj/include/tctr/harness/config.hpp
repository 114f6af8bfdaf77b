// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tctr/backbone/backbone.hpp"
#include "tctr/core/rng.hpp"
#include "tctr/head/anchors.hpp"
#include "tctr/head/detection.hpp"
#include "tctr/head/losses.hpp"
#include "tctr/head/refine.hpp"
#include "tctr/numerics/adam.hpp"
#include "tctr/pillars/augment.hpp"
#include "tctr/pillars/grid.hpp"
#include "tctr/synth/scene.hpp"
#include "tctr/transformer/tctr.hpp"

namespace tctr::harness {

enum class Temporal { tctr, concat, none };

inline Temporal parse_temporal(const std::string& s) {
    if (s == "tctr") return Temporal::tctr;
    if (s == "concat") return Temporal::concat;
    if (s == "none") return Temporal::none;
    throw ConfigError("unknown temporal module '" + s + "' (expected tctr, concat or none)");
}

inline std::string to_string(Temporal t) {
    switch (t) {
        case Temporal::tctr: return "tctr";
        case Temporal::concat: return "concat";
        case Temporal::none: return "none";
    }
    return "?";
}

struct TrainConfig {
    int steps = 300;
    int batch = 2;
    double lr = 2e-3;
    double warmup_fraction = 0.3;
    double start_div = 10.0;  // lr at step 0 = lr / start_div
    double end_div = 100.0;   // lr at the last step = lr / end_div
    bool augment = true;
    int log_every = 1;
    num::AdamConfig adam;
};

struct DataConfig {
    std::string train_path;
    std::string eval_path;
    int train_sequences = 8;
    int eval_sequences = 8;
    std::uint64_t train_seed = 7;
    std::uint64_t eval_seed = 1007;
};

/// Every knob of every module. Derived fields are filled in by resolve().
struct RunConfig {
    std::uint64_t seed = 1;
    pillars::GridConfig grid;
    int pfn_channels = 32;
    backbone::BackboneConfig backbone;
    transformer::TctrConfig tctr;
    Temporal temporal = Temporal::tctr;
    head::FusionMode fusion = head::FusionMode::gate;
    int refine_stages = 2;
    int refine_width = 64;
    head::MatchThresholds match;
    double focal_gamma = 2.0;
    head::LossWeights beta;
    head::NmsConfig nms;
    pillars::AugmentConfig aug;
    synth::SceneConfig scene;
    TrainConfig train;
    DataConfig data;
    std::vector<double> eval_thresholds = {0.5, 1.0};
    int render_size = 512;
    std::string gradcheck_preset = "desk";
    int gradcheck_samples = 3;
    double gradcheck_tolerance = 1e-4;
    double gradcheck_step = 1e-5;
    double gradcheck_floor = 1e-4;
    std::string ablate_axis = "framework";
    std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};
    std::vector<int> ablate_frames = {1, 3, 5};
    std::string ablate_rows;  // comma-separated subset of the axis rows; empty runs all

    int classes() const { return static_cast<int>(scene.classes.size()); }
    /// TCTR runs only when its output is consumed.
    bool uses_tctr() const { return temporal == Temporal::tctr && fusion != head::FusionMode::x_only; }
    bool temporal_input() const { return uses_tctr() || temporal == Temporal::concat; }
    int radius() const { return temporal_input() ? tctr.T : 0; }
    int frames() const { return 2 * radius() + 1; }
    int out_rows() const { return tctr.h1 << refine_stages; }
    int out_cols() const { return tctr.w1 << refine_stages; }
    int anchors_per_location() const { return classes() * head::kYawsPerClass; }

    void resolve() {
        grid.validate();
        backbone.in_channels = pfn_channels;
        backbone.validate();
        const int d = backbone.downsample();
        if (grid.height() % d != 0 || grid.width() % d != 0)
            throw ConfigError("grid " + std::to_string(grid.height()) + "x" + std::to_string(grid.width()) +
                              " is not divisible by the backbone downsample " + std::to_string(d));
        tctr.c1 = backbone.out_channels;
        tctr.h1 = grid.height() / d;
        tctr.w1 = grid.width() / d;
        tctr.validate();
        scene.x_min = grid.x_min;
        scene.x_max = grid.x_max;
        scene.y_min = grid.y_min;
        scene.y_max = grid.y_max;
        scene.validate();
        if (pfn_channels < 1) throw ConfigError("pfn.channels must be >= 1");
        if (refine_stages < 0 || refine_width < 1) throw ConfigError("refine stages/width out of range");
        if (scene.target_frame() < radius() || scene.target_frame() + radius() >= scene.frames)
            throw ConfigError("the 2T+1 window around scene.target does not fit in scene.frames");
        if (train.steps < 0 || train.batch < 1 || !(train.lr > 0)) throw ConfigError("train steps/batch/lr invalid");
        if (!(train.warmup_fraction > 0 && train.warmup_fraction < 1))
            throw ConfigError("train.warmup_fraction must be in (0, 1)");
        if (!(match.negative <= match.positive)) throw ConfigError("match thresholds must satisfy negative <= positive");
        if (eval_thresholds.empty()) throw ConfigError("eval.thresholds must not be empty");
        if (render_size < 8) throw ConfigError("render.size must be >= 8");
        if (gradcheck_samples < 0) throw ConfigError("gradcheck.samples must be >= 0");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    T x{};
    in >> x;
    if (!in || !in.eof()) throw ConfigError("bad value '" + v + "' for " + key);
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("bad boolean '" + v + "' for " + key);
}

inline std::string format_double(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

}  // namespace detail

/// Key registry binding dotted names to RunConfig fields.
class ConfigBinder {
   public:
    struct Field {
        std::function<void(const std::string&)> set;
        std::function<std::string()> get;
    };

    explicit ConfigBinder(RunConfig& c) {
        num("seed", c.seed);
        num("grid.x_min", c.grid.x_min);
        num("grid.x_max", c.grid.x_max);
        num("grid.y_min", c.grid.y_min);
        num("grid.y_max", c.grid.y_max);
        num("grid.z_min", c.grid.z_min);
        num("grid.z_max", c.grid.z_max);
        num("grid.dx", c.grid.dx);
        num("grid.dy", c.grid.dy);
        num("grid.max_points_per_pillar", c.grid.max_points_per_pillar);
        num("grid.max_pillars", c.grid.max_pillars);
        num("pfn.channels", c.pfn_channels);
        num("backbone.stem_width", c.backbone.stem_width);
        bools("backbone.stem_pool", c.backbone.stem_pool);
        list("backbone.block_widths", c.backbone.block_widths);
        bools("backbone.pool_after", c.backbone.pool_after);
        num("backbone.out_channels", c.backbone.out_channels);
        num("tctr.T", c.tctr.T);
        num("tctr.c2", c.tctr.c2);
        num("tctr.c3", c.tctr.c3);
        num("tctr.enc_blocks", c.tctr.enc_blocks);
        num("tctr.dec_blocks", c.tctr.dec_blocks);
        num("tctr.heads", c.tctr.heads);
        num("tctr.dk", c.tctr.dk);
        num("tctr.ffn_hidden", c.tctr.ffn_hidden);
        flag("tctr.encoder_pe", c.tctr.encoder_pe);
        add("tctr.variant", [&c](const std::string& v) { c.tctr.variant = transformer::parse_variant(v); },
            [&c] { return transformer::to_string(c.tctr.variant); });
        add("model.temporal", [&c](const std::string& v) { c.temporal = parse_temporal(v); },
            [&c] { return to_string(c.temporal); });
        add("model.fusion", [&c](const std::string& v) { c.fusion = head::parse_fusion(v); },
            [&c] { return head::to_string(c.fusion); });
        num("refine.stages", c.refine_stages);
        num("refine.width", c.refine_width);
        num("head.pos_iou", c.match.positive);
        num("head.neg_iou", c.match.negative);
        num("loss.gamma", c.focal_gamma);
        num("loss.beta_cls", c.beta.cls);
        num("loss.beta_loc", c.beta.loc);
        num("loss.beta_dir", c.beta.dir);
        num("nms.score_threshold", c.nms.score_threshold);
        num("nms.iou_threshold", c.nms.iou_threshold);
        num("nms.max_detections", c.nms.max_detections);
        flag("aug.enabled", c.aug.enabled);
        flag("aug.flip_x", c.aug.flip_x);
        flag("aug.flip_y", c.aug.flip_y);
        num("aug.rotation", c.aug.rotation);
        num("aug.scale_min", c.aug.scale_min);
        num("aug.scale_max", c.aug.scale_max);
        num("scene.objects_min", c.scene.objects_min);
        num("scene.objects_max", c.scene.objects_max);
        num("scene.size_jitter", c.scene.size_jitter);
        num("scene.speed_min", c.scene.speed_min);
        num("scene.speed_max", c.scene.speed_max);
        num("scene.yaw_rate_max", c.scene.yaw_rate_max);
        num("scene.density", c.scene.density);
        num("scene.falloff_range", c.scene.falloff_range);
        num("scene.clutter_points", c.scene.clutter_points);
        num("scene.occlusion_dropout", c.scene.occlusion_dropout);
        num("scene.noise_sigma", c.scene.noise_sigma);
        num("scene.frames", c.scene.frames);
        num("scene.target", c.scene.target);
        num("scene.ground_z", c.scene.ground_z);
        num("train.steps", c.train.steps);
        num("train.batch", c.train.batch);
        num("train.lr", c.train.lr);
        num("train.warmup_fraction", c.train.warmup_fraction);
        num("train.start_div", c.train.start_div);
        num("train.end_div", c.train.end_div);
        flag("train.augment", c.train.augment);
        num("train.log_every", c.train.log_every);
        num("adam.beta1", c.train.adam.beta1);
        num("adam.beta2", c.train.adam.beta2);
        num("adam.eps", c.train.adam.eps);
        str("data.train_path", c.data.train_path);
        str("data.eval_path", c.data.eval_path);
        num("data.train_sequences", c.data.train_sequences);
        num("data.eval_sequences", c.data.eval_sequences);
        num("data.train_seed", c.data.train_seed);
        num("data.eval_seed", c.data.eval_seed);
        list("eval.thresholds", c.eval_thresholds);
        num("render.size", c.render_size);
        str("gradcheck.preset", c.gradcheck_preset);
        num("gradcheck.samples", c.gradcheck_samples);
        num("gradcheck.tolerance", c.gradcheck_tolerance);
        num("gradcheck.step", c.gradcheck_step);
        num("gradcheck.floor", c.gradcheck_floor);
        str("ablate.axis", c.ablate_axis);
        list("ablate.seeds", c.ablate_seeds);
        list("ablate.frames", c.ablate_frames);
        str("ablate.rows", c.ablate_rows);
    }

    void set(const std::string& key, const std::string& value) {
        auto it = fields_.find(key);
        if (it == fields_.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.set(detail::trim(value));
    }

    /// "key=value" as given on the command line.
    void set_assignment(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
        set(detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }

    /// Line-based `key = value` text; '#' starts a comment.
    void load_text(const std::string& text, const std::string& origin = "config") {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            try {
                set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        load_text(ss.str(), path);
    }

    /// Every key with its current value, sorted by key, one `key = value` per line.
    std::string dump() const {
        std::string out;
        for (const auto& [k, f] : fields_) out += k + " = " + f.get() + "\n";
        return out;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, f] : fields_) out.push_back(k);
        return out;
    }

   private:
    void add(const std::string& key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
        fields_[key] = Field{std::move(set), std::move(get)};
    }

    template <typename N>
    void num(const std::string& key, N& ref) {
        add(key, [key, &ref](const std::string& v) { ref = detail::parse_number<N>(key, v); },
            [&ref] {
                if constexpr (std::is_floating_point_v<N>) return detail::format_double(ref);
                else return std::to_string(ref);
            });
    }

    void flag(const std::string& key, bool& ref) {
        add(key, [key, &ref](const std::string& v) { ref = detail::parse_bool(key, v); },
            [&ref] { return std::string(ref ? "true" : "false"); });
    }

    void str(const std::string& key, std::string& ref) {
        add(key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; });
    }

    template <typename N>
    void list(const std::string& key, std::vector<N>& ref) {
        add(key,
            [key, &ref](const std::string& v) {
                ref.clear();
                if (!v.empty())
                    for (const auto& item : detail::split(v, ',')) ref.push_back(detail::parse_number<N>(key, item));
            },
            [&ref] {
                std::string s;
                for (std::size_t i = 0; i < ref.size(); ++i) {
                    if (i) s += ",";
                    if constexpr (std::is_floating_point_v<N>) s += detail::format_double(ref[i]);
                    else s += std::to_string(ref[i]);
                }
                return s;
            });
    }

    void bools(const std::string& key, std::vector<bool>& ref) {
        add(key,
            [key, &ref](const std::string& v) {
                ref.clear();
                if (!v.empty())
                    for (const auto& item : detail::split(v, ',')) ref.push_back(detail::parse_bool(key, item));
            },
            [&ref] {
                std::string s;
                for (std::size_t i = 0; i < ref.size(); ++i) s += std::string(i ? "," : "") + (ref[i] ? "1" : "0");
                return s;
            });
    }

    std::map<std::string, Field> fields_;
};

/// Resolved `key = value` text of a config.
inline std::string config_text(const RunConfig& c) {
    RunConfig copy = c;
    return ConfigBinder(copy).dump();
}

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(config_text(c)); }

/// Applies a config file (if any) and then `key=value` overrides, then resolves.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig c;
    ConfigBinder b(c);
    if (!path.empty()) b.load_file(path);
    for (const auto& kv : overrides) b.set_assignment(kv);
    c.resolve();
    return c;
}

}  // namespace tctr::harness
