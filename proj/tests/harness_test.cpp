// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "support/ap_oracle.hpp"
#include "tctr/harness.hpp"

using namespace tctr;
using namespace tctr::harness;

namespace {

/// Smallest full pipeline: 32x32 pillars, narrow layers, short sequences.
RunConfig small_config() {
    RunConfig c;
    c.scene.clutter_points = 100;
    c.scene.frames = 3;
    c.train.batch = 1;
    return tiny_config(c);
}

std::vector<SequenceSample> small_data(const RunConfig& c, int n, std::uint64_t seed = 5) {
    return synth::generate_dataset(c.scene, n, seed);
}

head::Detection det(float x, float y, float score, int cls = 0) {
    head::Detection d;
    d.box = {x, y, -1, 1, 1, 1, 0, cls};
    d.score = score;
    return d;
}

GtBox gt(float x, float y, int cls = 0) { return {x, y, -1, 1, 1, 1, 0, cls}; }

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tctr_harness_" + name);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

// ---- config ----

TEST(Config, DefaultsResolveToDeskShapes) {
    RunConfig c = load_config("", {});
    EXPECT_EQ(c.grid.width(), 64);
    EXPECT_EQ(c.tctr.h1, 8);
    EXPECT_EQ(c.tctr.w1, 8);
    EXPECT_EQ(c.tctr.c1, c.backbone.out_channels);
    EXPECT_EQ(c.frames(), 3);
    EXPECT_EQ(c.out_rows(), 32);
    EXPECT_EQ(c.backbone.in_channels, c.pfn_channels);
}

TEST(Config, FileAndOverridesApplyInOrder) {
    RunConfig c;
    ConfigBinder b(c);
    b.load_text("# comment\ntrain.steps = 12\n\nmodel.fusion = add  # trailing\ntctr.T=2\n");
    b.set_assignment("train.steps=7");
    c.resolve();
    EXPECT_EQ(c.train.steps, 7);
    EXPECT_EQ(c.fusion, head::FusionMode::add);
    EXPECT_EQ(c.frames(), 5);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
    RunConfig c;
    ConfigBinder b(c);
    EXPECT_THROW(b.set_assignment("train.stepz=3"), ConfigError);
    EXPECT_THROW(b.set_assignment("train.steps=three"), ConfigError);
    EXPECT_THROW(b.set_assignment("aug.enabled=maybe"), ConfigError);
    EXPECT_THROW(b.set_assignment("model.fusion=mean"), ConfigError);
    EXPECT_THROW(b.set_assignment("no_equals_sign"), ConfigError);
    try {
        b.load_text("train.steps = 3\nbogus.key = 1\n", "run.cfg");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("bogus.key"), std::string::npos);
    }
}

TEST(Config, InconsistentSettingsFailToResolve) {
    EXPECT_THROW(load_config("", {"grid.dx=0.3"}), ConfigError);
    EXPECT_THROW(load_config("", {"tctr.T=3"}), ConfigError);  // window of 7 in 5 frames
    EXPECT_THROW(load_config("", {"train.warmup_fraction=1"}), ConfigError);
    EXPECT_THROW(load_config("", {"backbone.pool_after=1,1,1,1"}), ConfigError);
}

TEST(Config, DumpReloadsToTheSameHash) {
    RunConfig a = load_config("", {"model.temporal=concat", "eval.thresholds=0.25,2", "ablate.rows=gate"});
    RunConfig b;
    ConfigBinder(b).load_text(config_text(a));
    b.resolve();
    EXPECT_EQ(config_text(a), config_text(b));
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(load_config("", {})));
}

TEST(Config, TargetOnlyModelsUseOneFrame) {
    EXPECT_EQ(load_config("", {"model.temporal=none"}).frames(), 1);
    EXPECT_EQ(load_config("", {"model.fusion=x_only"}).frames(), 1);
    EXPECT_EQ(load_config("", {"model.temporal=concat"}).frames(), 3);
}

// ---- model ----

TEST(Model, DeclaresOnlyWhatTheVariantReads) {
    auto names = [](const RunConfig& c) { return make_model<float>(c).names(); };
    auto has_prefix = [](const std::vector<std::string>& v, const std::string& p) {
        return std::any_of(v.begin(), v.end(), [&](const auto& n) { return n.rfind(p, 0) == 0; });
    };
    const auto gate = names(load_config("", {}));
    EXPECT_TRUE(has_prefix(gate, "tctr."));
    EXPECT_TRUE(has_prefix(gate, "refine.stage0.gate"));
    EXPECT_FALSE(has_prefix(gate, "concat."));
    const auto x_only = names(load_config("", {"model.fusion=x_only"}));
    EXPECT_FALSE(has_prefix(x_only, "tctr."));
    EXPECT_FALSE(has_prefix(x_only, "refine.stage0.gate"));
    const auto add = names(load_config("", {"model.fusion=add"}));
    EXPECT_TRUE(has_prefix(add, "tctr."));
    EXPECT_FALSE(has_prefix(add, "refine.stage0.gate"));
    EXPECT_TRUE(has_prefix(names(load_config("", {"model.temporal=concat"})), "concat."));
    EXPECT_TRUE(has_prefix(names(load_config("", {"model.fusion=concat"})), "fuse.concat"));
}

TEST(Model, ForwardShapesMatchTheAnchorGrid) {
    const RunConfig c = small_config();
    auto store = make_model<float>(c);
    const auto seq = small_data(c, 1)[0];
    Rng rng(1);
    num::Tape<float> t;
    const auto out = model_forward(t, store, c, voxelize_window(seq, c, rng));
    const auto anchors = anchor_grid(c, store);
    EXPECT_EQ(out.head.cls.dim(0), anchors.size());
    EXPECT_EQ(out.head.box.dim(1), head::kBoxDims);
    EXPECT_EQ(out.head.dir.dim(1), 2);
    ASSERT_TRUE(out.g.has_value());
    EXPECT_EQ(out.g->dims(), out.x_t.dims());
}

TEST(Model, LossIsNormalizedByPositives) {
    const RunConfig c = small_config();
    auto store = make_model<double>(c);
    const auto seq = small_data(c, 1)[0];
    Rng rng(2);
    num::Tape<double> t;
    const auto out = model_forward(t, store, c, voxelize_window(seq, c, rng));
    const auto ta = head::assign_targets(anchor_grid(c, store), seq.frames[seq.target].gt_boxes, c.match);
    ASSERT_GT(ta.positives(), 0);
    LossParts parts;
    const double l = detection_loss(out.head, ta, c, parts).value()[0];
    EXPECT_NEAR(l, (c.beta.cls * parts.cls + c.beta.loc * parts.loc + c.beta.dir * parts.dir), 1e-9 * std::abs(l));
    EXPECT_EQ(parts.positives, ta.positives());
}

// ---- schedule and training ----

TEST(Schedule, OneCycleEndpointsAndPeak) {
    TrainConfig tc;
    const int steps = 101;
    EXPECT_DOUBLE_EQ(one_cycle_lr(tc, 0, steps), tc.lr / 10);
    EXPECT_NEAR(one_cycle_lr(tc, 30, steps), tc.lr, 1e-15);
    EXPECT_NEAR(one_cycle_lr(tc, 100, steps), tc.lr / 100, 1e-15);
    for (int s = 1; s <= 30; ++s) EXPECT_GT(one_cycle_lr(tc, s, steps), one_cycle_lr(tc, s - 1, steps));
    for (int s = 31; s <= 100; ++s) EXPECT_LT(one_cycle_lr(tc, s, steps), one_cycle_lr(tc, s - 1, steps));
}

TEST(Train, ZeroStepsKeepsTheInitialization) {
    RunConfig c = small_config();
    c.train.steps = 0;
    const auto data = small_data(c, 2);
    const auto r = train(c, data);
    auto init = make_model<float>(c);
    set_anchor_stats(init, head::mean_box_stats(target_boxes(data), c.classes(), default_anchor_stats(c)));
    EXPECT_TRUE(r.store == init);
    EXPECT_TRUE(r.log.empty());
}

TEST(Train, FixedSeedGivesBitIdenticalCurves) {
    RunConfig c = small_config();
    c.train.steps = 3;
    const auto data = small_data(c, 3);
    const auto a = train(c, data), b = train(c, data);
    ASSERT_EQ(a.log.size(), 3u);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].total, b.log[i].total);
        EXPECT_EQ(a.log[i].lr, b.log[i].lr);
    }
    EXPECT_TRUE(a.store == b.store);
    c.seed = 99;
    EXPECT_NE(train(c, data).log[0].total, a.log[0].total);
}

TEST(Train, NonFiniteInputAbortsWithStepIndex) {
    RunConfig c = small_config();
    c.train.steps = 2;
    c.train.augment = false;
    auto data = small_data(c, 1);
    ASSERT_FALSE(data[0].frames[data[0].target].points.empty());
    for (auto& p : data[0].frames[data[0].target].points) p.r = std::numeric_limits<float>::infinity();
    try {
        train(c, data);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("last finite losses: none"), std::string::npos) << e.what();
    }
}

TEST(Train, StepLogIsKeyValue) {
    const auto rec = parse_records(
        [] {
            std::string s = format_step({4, 0.001, 1.5, 0.25, 0.5, 2.0});
            std::replace(s.begin(), s.end(), ' ', '\n');
            return s;
        }());
    EXPECT_EQ(rec.at("step"), "4");
    EXPECT_EQ(std::stod(rec.at("total")), 2.0);
    EXPECT_EQ(std::stod(rec.at("l_loc")), 0.25);
}

// ---- checkpoints ----

TEST(Checkpoint, MismatchedConfigNamesOffendingEntries) {
    const auto dir = temp_dir("ckpt");
    const std::string path = (dir / "m.tckp").string();
    const RunConfig gate = small_config();
    num::save_checkpoint(path, make_model<float>(gate));
    RunConfig other = gate;
    other.fusion = head::FusionMode::x_only;
    auto store = make_model<float>(other);
    try {
        num::load_checkpoint(path, store);
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        EXPECT_FALSE(e.names().empty());
        EXPECT_NE(std::string(e.what()).find("tctr."), std::string::npos);
    }
    auto same = make_model<float>(gate);
    num::load_checkpoint(path, same);
    EXPECT_TRUE(same == make_model<float>(gate));
}

// ---- metrics ----

TEST(Metrics, PerfectPredictionsScoreOne) {
    std::vector<std::vector<GtBox>> gts = {{gt(0, 0, 0), gt(3, 3, 1)}, {gt(-2, 1, 1)}};
    std::vector<std::vector<head::Detection>> preds = {{det(0, 0, 1, 0), det(3, 3, 1, 1)}, {det(-2, 1, 1, 1)}};
    const auto r = score_detections(preds, gts, 2, {0.5, 1.0});
    for (std::size_t t = 0; t < 2; ++t)
        for (int c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(r.ap[t][c], 1.0);
    EXPECT_DOUBLE_EQ(r.map, 1.0);
    EXPECT_EQ(r.counts[0][1].tp, 2);
    EXPECT_EQ(r.counts[0][1].fp, 0);
}

TEST(Metrics, NoPredictionsScoreZero) {
    std::vector<std::vector<GtBox>> gts = {{gt(0, 0), gt(2, 0)}};
    const auto r = score_detections({{}}, gts, 1, {0.5, 1.0});
    EXPECT_DOUBLE_EQ(r.ap[0][0], 0.0);
    EXPECT_EQ(r.counts[0][0].fn, 2);
    EXPECT_EQ(r.counts[1][0].fn, 2);
    EXPECT_DOUBLE_EQ(r.map, 0.0);
}

TEST(Metrics, SpuriousLowerScoreKeepsFullAp) {
    // One gt; a hit at 0.3 m (score 0.9) and a spurious box (score 0.8).
    const auto r = score_detections({{det(0.3f, 0, 0.9f), det(5, 5, 0.8f)}}, {{gt(0, 0)}}, 1, {0.5});
    EXPECT_DOUBLE_EQ(r.ap[0][0], 1.0);
    EXPECT_EQ(r.counts[0][0].tp, 1);
    EXPECT_EQ(r.counts[0][0].fp, 1);
}

TEST(Metrics, SpuriousHigherScoreHalvesPrecision) {
    // Ranked FP then TP: precision 1/2 at recall 1 for every recall level.
    const auto r = score_detections({{det(5, 5, 0.9f), det(0.3f, 0, 0.8f)}}, {{gt(0, 0)}}, 1, {0.5});
    EXPECT_DOUBLE_EQ(r.ap[0][0], 0.5);
}

TEST(Metrics, MatchingIsStrictAndOneToOne) {
    EXPECT_EQ(score_detections({{det(0.5f, 0, 1)}}, {{gt(0, 0)}}, 1, {0.5}).counts[0][0].tp, 0);
    const auto r = score_detections({{det(0.1f, 0, 0.9f), det(-0.1f, 0, 0.8f)}}, {{gt(0, 0)}}, 1, {0.5});
    EXPECT_EQ(r.counts[0][0].tp, 1);
    EXPECT_EQ(r.counts[0][0].fp, 1);
    // Class mismatch never matches.
    EXPECT_EQ(score_detections({{det(0, 0, 1, 1)}}, {{gt(0, 0, 0)}}, 2, {0.5}).counts[0][0].fn, 1);
}

TEST(Metrics, ClassesWithoutGroundTruthAreSkipped) {
    const auto r = score_detections({{det(0, 0, 1, 0), det(4, 4, 0.7f, 1)}}, {{gt(0, 0, 0)}}, 2, {1.0});
    EXPECT_TRUE(std::isnan(r.ap[0][1]));
    EXPECT_EQ(r.counts[0][1].fp, 1);
    EXPECT_DOUBLE_EQ(r.map, 1.0);
}

TEST(Metrics, MatchesBruteForceOracle) {
    Rng rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        const int np = static_cast<int>(rng.below(6)), ng = static_cast<int>(rng.below(4));
        std::vector<head::Detection> p;
        std::vector<GtBox> g;
        for (int i = 0; i < ng; ++i) g.push_back(gt(rng.uniform(-2, 2), rng.uniform(-2, 2)));
        for (int i = 0; i < np; ++i)
            p.push_back(det(rng.uniform(-2, 2), rng.uniform(-2, 2), static_cast<float>(0.05 + 0.9 * rng.uniform())));
        const double thr = rng.bernoulli(0.5) ? 0.5 : 1.0;
        const auto r = score_detections({p}, {g}, 1, {thr});
        if (ng == 0) {
            EXPECT_TRUE(std::isnan(r.ap[0][0]));
            continue;
        }
        EXPECT_NEAR(r.ap[0][0], tctr::testing::brute_force_ap(p, g, thr), 1e-9) << "trial " << trial;
    }
}

// ---- gradcheck ----

TEST(Gradcheck, ToyLinearConfigIsTight) {
    const RunConfig c = small_config();
    GradcheckOptions o;
    o.samples = 0;
    o.tolerance = 1e-5;
    const auto r = gradcheck(c, "toy", o);
    EXPECT_TRUE(r.passed()) << r.max_rel_error;
    EXPECT_FALSE(r.groups.empty());
}

TEST(Gradcheck, TinyFullPipelinePasses) {
    const RunConfig c = small_config();
    GradcheckOptions o;
    o.samples = 2;
    const auto r = gradcheck(c, "desk", o);
    EXPECT_TRUE(r.passed()) << r.max_rel_error;
    EXPECT_TRUE(r.groups.count("tctr.enc0"));
    EXPECT_TRUE(r.groups.count("refine.stage0"));
}

TEST(Gradcheck, CorruptedBackwardIsReported) {
    num::ParamStore<double> store(3);
    store.declare("toy.w", {4}, num::Init::kaiming);
    // y = w^2 with a backward rule that forgets the factor 2.
    auto bad_square = [](const num::Var<double>& w) {
        num::Tensor<double> y = w.value();
        for (auto& v : y.data()) v = v * v;
        return w.tape().push("bad_square", std::move(y), {w}, [w](const num::Tensor<double>& g, num::Tape<double>& t) {
            if (auto* gw = t.grad_slot(w))
                for (std::size_t i = 0; i < g.size(); ++i) (*gw)[i] += g[i] * w.value()[i];
        });
    };
    const auto r = check_gradients(store, [&](num::Tape<double>& t, const num::ParamStore<double>& s) {
        return num::sum(bad_square(t.param(s, "toy.w")));
    });
    EXPECT_FALSE(r.passed());
    EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);
    std::ostringstream out;
    write_gradcheck(out, r);
    EXPECT_NE(out.str().find("result=fail"), std::string::npos);
}

TEST(Gradcheck, KinkInsideTheStencilIsNotReported) {
    num::ParamStore<double> store(5);
    store.declare("toy.w", {4}, num::Init::kaiming);
    // Every ReLU input sits 3e-9 above its kink: the central quotient at 1e-5 is about half the slope.
    num::Tensor<double> shift({4});
    for (std::size_t i = 0; i < 4; ++i) shift[i] = 3e-9 - store.value("toy.w")[i];
    const auto loss = [&](num::Tape<double>& t, const num::ParamStore<double>& s) {
        return num::sum(num::relu(num::add(t.param(s, "toy.w"), t.constant(shift))));
    };
    const auto r = check_gradients(store, loss);
    EXPECT_TRUE(r.passed()) << r.max_rel_error;
    EXPECT_EQ(r.params.at(0).refined, r.params.at(0).checked);
}

TEST(Gradcheck, UnknownPresetIsAConfigError) {
    EXPECT_THROW(gradcheck(small_config(), "huge", {}), ConfigError);
}

// ---- ablation ----

TEST(Ablation, RowSetsFollowTheTables) {
    const RunConfig c = load_config("", {});
    auto names = [&](const std::string& axis) {
        std::vector<std::string> out;
        for (const auto& v : ablation_variants(c, axis)) out.push_back(v.name);
        return out;
    };
    EXPECT_EQ(names("framework"),
              (std::vector<std::string>{"baseline", "baseline+concat", "baseline+TCTR", "baseline+TCTR+FRM"}));
    EXPECT_EQ(names("encoder"), (std::vector<std::string>{"t_encoder", "c_encoder", "tc_encoder"}));
    EXPECT_EQ(names("fusion"), (std::vector<std::string>{"x_only", "g_only", "concat", "add", "gate"}));
    EXPECT_EQ(names("frames"), (std::vector<std::string>{"1T", "3T", "5T"}));
    EXPECT_THROW(names("optimizer"), ConfigError);
    const auto fw = ablation_variants(c, "framework");
    EXPECT_EQ(fw[0].config.frames(), 1);
    EXPECT_EQ(fw[1].config.temporal, Temporal::concat);
    EXPECT_EQ(fw[2].config.fusion, head::FusionMode::g_only);
    EXPECT_EQ(fw[3].config.fusion, head::FusionMode::gate);
}

TEST(Ablation, RowFilterAndFrameList) {
    RunConfig c = load_config("", {"ablate.frames=1,3", "ablate.rows=3T"});
    const auto v = ablation_variants(c, "frames");
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].config.tctr.T, 1);
    c.ablate_rows = "9T";
    EXPECT_THROW(ablation_variants(c, "frames"), ConfigError);
    c.ablate_rows.clear();
    c.ablate_frames = {2};
    EXPECT_THROW(ablation_variants(c, "frames"), ConfigError);
}

TEST(Ablation, FramesTableHasOneRowPerLengthAndRepeats) {
    RunConfig c = small_config();
    c.train.steps = 2;
    c.ablate_frames = {1, 3};
    c.ablate_seeds = {1, 2};
    const auto train_data = small_data(c, 2, 11), eval_data = small_data(c, 2, 12);
    const auto a = run_ablation(c, "frames", train_data, eval_data);
    const auto b = run_ablation(c, "frames", train_data, eval_data);
    ASSERT_EQ(a.rows.size(), 2u);
    EXPECT_EQ(a.rows[0].variant, "1T");
    EXPECT_EQ(a.rows[0].seed_map.size(), 2u);
    EXPECT_EQ(format_table(a), format_table(b));
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].seed_map, b.rows[i].seed_map);
    EXPECT_NE(format_table(a).find("monotone="), std::string::npos);
}

// ---- render ----

namespace {

struct Bmp {
    int width = 0, height = 0;
    std::vector<Rgb> px;  // top row first
};

Bmp parse_bmp(const std::vector<unsigned char>& b) {
    auto u32 = [&](std::size_t o) {
        return static_cast<std::uint32_t>(b[o]) | static_cast<std::uint32_t>(b[o + 1]) << 8 |
               static_cast<std::uint32_t>(b[o + 2]) << 16 | static_cast<std::uint32_t>(b[o + 3]) << 24;
    };
    EXPECT_EQ(b[0], 'B');
    EXPECT_EQ(b[1], 'M');
    EXPECT_EQ(u32(2), b.size());
    EXPECT_EQ(b[28], 24);
    Bmp out;
    out.width = static_cast<int>(u32(18));
    out.height = static_cast<int>(u32(22));
    const std::size_t stride = (static_cast<std::size_t>(out.width) * 3 + 3) / 4 * 4;
    const std::size_t data = u32(10);
    for (int r = out.height - 1; r >= 0; --r)
        for (int c = 0; c < out.width; ++c) {
            const std::size_t o = data + static_cast<std::size_t>(r) * stride + static_cast<std::size_t>(c) * 3;
            out.px.push_back({b[o + 2], b[o + 1], b[o]});
        }
    return out;
}

std::size_t count(const Bmp& b, Rgb c) { return static_cast<std::size_t>(std::count(b.px.begin(), b.px.end(), c)); }

}  // namespace

TEST(Render, EmptySceneIsBlankAtConfiguredSize) {
    pillars::GridConfig g;
    const auto b = parse_bmp(encode_bmp(render_bev(PointFrame{}, {}, g, 101)));
    EXPECT_EQ(b.width, 101);
    EXPECT_EQ(b.height, 101);
    EXPECT_EQ(count(b, Rgb{}), 101u * 101u);
}

TEST(Render, GroundTruthAndDetectionOutlinesArePresent) {
    pillars::GridConfig g;
    PointFrame f;
    f.gt_boxes.push_back({-3, 2, -1, 4, 2, 1.5f, 0.3f, 0});
    f.points.push_back({1, 1, -1, 0.5f});
    head::Detection d;
    d.box = {-3.2f, 2.1f, -1, 4, 2, 1.5f, 0.35f, 0};
    d.score = 0.9f;
    const auto b = parse_bmp(encode_bmp(render_bev(f, {d}, g, 256)));
    // Each outline is at least its perimeter in pixels: 2 * (4 + 2) m at 20 px/m, minus overlaps.
    EXPECT_GT(count(b, kGtColor), 100u);
    EXPECT_GT(count(b, kDetectionColor), 100u);
    EXPECT_EQ(count(b, kPointColor), 1u);
    // Pixels far from the box stay background.
    EXPECT_EQ(b.px[0], Rgb{});
}

TEST(Render, UnwritablePathIsAnIoError) {
    pillars::GridConfig g;
    EXPECT_THROW(write_bmp("/nonexistent-dir/x/render.bmp", render_bev(PointFrame{}, {}, g, 8)), IoError);
}

// ---- summary ----

TEST(Summary, RecordsCarryTheDocumentedFields) {
    const RunConfig c = load_config("", {});
    const auto r = score_detections({{det(0, 0, 1, 0)}}, {{gt(0, 0, 0)}}, 2, {0.5, 1.0});
    const auto rec = parse_records(format_summary(make_summary(c, 300, 0.125, r, 12.5)));
    for (const char* k : {"config_hash", "seed", "steps", "final_loss", "map", "per_class_ap.0", "wall_seconds"})
        EXPECT_TRUE(rec.count(k)) << k;
    EXPECT_FALSE(rec.count("per_class_ap.1"));
    EXPECT_EQ(rec.at("steps"), "300");
    EXPECT_EQ(std::stod(rec.at("map")), 1.0);
    EXPECT_EQ(rec.at("config_hash").size(), 16u);
}
