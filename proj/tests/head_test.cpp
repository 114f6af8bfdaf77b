// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/finite_diff.hpp"
#include "tctr/head/detection.hpp"
#include "tctr/head/losses.hpp"
#include "tctr/head/refine.hpp"

using namespace tctr;
using namespace tctr::num;
using namespace tctr::head;
using tctr::testing::random_tensor;

namespace {

AnchorGrid desk_anchors() {
    pillars::GridConfig g;
    return AnchorGrid::make(g, 32, 32, {{4.2f, 1.9f, 1.6f, -0.93f}, {0.8f, 0.8f, 1.7f, -0.88f}});
}

GtBox random_box(Rng& rng, int cls) {
    const bool car = cls == 0;
    return {static_cast<float>(rng.uniform(-5, 5)), static_cast<float>(rng.uniform(-5, 5)),
            static_cast<float>(rng.uniform(-1.2, -0.6)),
            static_cast<float>((car ? 4.2 : 0.8) * rng.uniform(0.9, 1.1)),
            static_cast<float>((car ? 1.9 : 0.8) * rng.uniform(0.9, 1.1)),
            static_cast<float>((car ? 1.6 : 1.7) * rng.uniform(0.9, 1.1)),
            static_cast<float>(rng.uniform(-std::numbers::pi, std::numbers::pi)), cls};
}

}  // namespace

TEST(Gate, ZeroGateHalvesInput) {
    Tape<double> t;
    auto x = t.constant(random_tensor({3, 4, 4}, 1, -5, 5));
    auto f = gate_fuse(x, t.constant(Tensor<double>({3, 4, 4})));
    for (std::size_t i = 0; i < x.value().size(); ++i) EXPECT_NEAR(f.value()[i], 0.5 * x.value()[i], 1e-6);
}

TEST(Gate, SaturatesAndNeverGrows) {
    Tape<double> t;
    auto x = t.constant(random_tensor({2, 3, 3}, 2, -5, 5));
    Tensor<double> hi({2, 3, 3}), lo({2, 3, 3});
    hi.fill(40);
    lo.fill(-40);
    auto fh = gate_fuse(x, t.constant(hi)).value(), fl = gate_fuse(x, t.constant(lo)).value();
    auto fr = gate_fuse(x, t.constant(random_tensor({2, 3, 3}, 3, -8, 8))).value();
    for (std::size_t i = 0; i < fh.size(); ++i) {
        EXPECT_NEAR(fh[i], x.value()[i], 1e-12);
        EXPECT_NEAR(fl[i], 0.0, 1e-12);
        EXPECT_LE(std::abs(fr[i]), std::abs(x.value()[i]));
        EXPECT_EQ(std::signbit(fr[i]), std::signbit(x.value()[i]));
    }
    EXPECT_THROW(gate_fuse(x, t.constant(Tensor<double>({2, 3, 4}))), ShapeError);
}

TEST(Fusion, ModesBehaveAsDefined) {
    ParamStore<double> s(1);
    declare_fusion(s, FusionMode::concat, 3);
    Tape<double> t;
    auto x = t.leaf(random_tensor({3, 4, 4}, 4));
    auto g = t.leaf(random_tensor({3, 4, 4}, 5));
    EXPECT_EQ(fuse_variant(t, s, x, g, FusionMode::gate).value(), gate_fuse(x, g).value());
    auto zero = t.constant(Tensor<double>({3, 4, 4}));
    EXPECT_EQ(fuse_variant(t, s, x, zero, FusionMode::add).value(), x.value());
    EXPECT_EQ(fuse_variant(t, s, x, g, FusionMode::g_only).value(), g.value());
    EXPECT_EQ(fuse_variant(t, s, x, g, FusionMode::concat).dims(), (Dims{3, 4, 4}));
    auto only = fuse_variant(t, s, x, g, FusionMode::x_only);
    t.backward(sum(only));
    const auto dg = t.grad(g);
    for (double v : dg.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(parse_fusion("multiply"), ConfigError);
    for (auto m : {FusionMode::gate, FusionMode::concat, FusionMode::add, FusionMode::x_only, FusionMode::g_only})
        EXPECT_EQ(parse_fusion(to_string(m)), m);
}

TEST(Refine, StageArithmetic) {
    ParamStore<double> s(2);
    declare_refine(s, 6, 4, 2, true, 6);
    Tape<double> t;
    auto f = t.constant(random_tensor({6, 8, 8}, 1));
    auto g = t.constant(random_tensor({6, 8, 8}, 2));
    EXPECT_EQ(upsample_refine(t, s, f, &g, 0).value(), f.value());
    EXPECT_EQ(upsample_refine(t, s, f, &g, 2).dims(), (Dims{4, 32, 32}));
    EXPECT_EQ(upsample_refine(t, s, f, nullptr, 2).dims(), (Dims{4, 32, 32}));
}

TEST(Refine, GatedOutputBoundedByPreGateConv) {
    ParamStore<double> s(2);
    declare_refine(s, 6, 4, 1, true, 6);
    Tape<double> t;
    auto f = t.constant(random_tensor({6, 5, 5}, 1));
    auto g = t.constant(random_tensor({6, 5, 5}, 2));
    auto out = upsample_refine(t, s, f, &g, 1).value();
    auto pre = upsample_refine(t, s, f, nullptr, 1).value();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_LE(std::abs(out[i]), std::abs(pre[i]));
}

TEST(Refine, GradientsMatchFiniteDifferences) {
    ParamStore<double> s(3);
    declare_fusion(s, FusionMode::concat, 3);
    declare_refine(s, 3, 4, 2, true, 3);
    for (const auto& n : s.names())
        if (n.ends_with(".b")) s.value(n) = random_tensor(s.value(n).dims(), 9, -0.2, 0.2);
    auto x = random_tensor({3, 3, 3}, 4), g = random_tensor({3, 3, 3}, 5);
    auto errs = tctr::testing::param_grad_errors(s, [&](Tape<double>& t, const ParamStore<double>& st) {
        auto gv = t.constant(g);
        auto f = fuse_variant(t, st, t.constant(x), gv, FusionMode::concat);
        return tctr::testing::random_readout(upsample_refine(t, st, f, &gv, 2), 8);
    });
    for (const auto& [name, e] : errs) EXPECT_LT(e, 1e-5) << name;
}

TEST(Head, OutputLayout) {
    ParamStore<double> s(1);
    declare_head(s, 8, 4);
    EXPECT_EQ(s.value("head.box.w").dim(0), 28);
    Tape<double> t;
    auto out = head_forward(t, s, t.constant(random_tensor({8, 5, 6}, 2)), 4);
    EXPECT_EQ(out.cls.dims(), (Dims{5 * 6 * 4, 1}));
    EXPECT_EQ(out.box.dims(), (Dims{5 * 6 * 4, 7}));
    EXPECT_EQ(out.dir.dims(), (Dims{5 * 6 * 4, 2}));
}

TEST(Head, ZeroWeightsGiveBiases) {
    ParamStore<double> s(1);
    declare_head(s, 8, 4);
    for (const auto& n : s.names()) {
        if (n.ends_with(".w")) s.value(n).fill(0);
        else s.value(n) = random_tensor(s.value(n).dims(), 3);
    }
    Tape<double> t;
    auto out = head_forward(t, s, t.constant(random_tensor({8, 3, 3}, 2)), 4);
    for (int row = 0; row < 36; ++row) {
        EXPECT_EQ(out.cls.value().at(row, 0), s.value("head.cls.b")[row % 4]);
        for (int j = 0; j < 7; ++j) EXPECT_EQ(out.box.value().at(row, j), s.value("head.box.b")[(row % 4) * 7 + j]);
    }
}

TEST(BevIou, ReferenceValues) {
    GtBox a{0, 0, 0, 1, 1, 1, 0, 0};
    GtBox b = a;
    EXPECT_DOUBLE_EQ(bev_iou(a, b), 1.0);
    b.x = 0.5f;
    EXPECT_NEAR(bev_iou(a, b), 1.0 / 3.0, 1e-12);
    b.x = 3;
    EXPECT_EQ(bev_iou(a, b), 0.0);
    GtBox c{0, 0, 0, 4, 2, 1, static_cast<float>(std::numbers::pi / 2), 0};
    GtBox d{0, 0, 0, 2, 4, 1, 0, 0};
    EXPECT_NEAR(bev_iou(c, d), 1.0, 1e-12);
}

TEST(Assign, ExactAnchorMatchIsPositiveWithZeroResiduals) {
    auto anchors = desk_anchors();
    const int idx = ((10 * 32 + 7) * 2 + 0) * 2 + 1;
    GtBox g = anchors.anchor(idx);
    auto ta = assign_targets(anchors, {g});
    EXPECT_EQ(ta.label[idx], 1);
    EXPECT_EQ(ta.matched[idx], 0);
    for (double r : ta.residual[idx]) EXPECT_NEAR(r, 0.0, 1e-7);
}

TEST(Assign, EmptySceneIsAllNegative) {
    auto ta = assign_targets(desk_anchors(), {});
    EXPECT_EQ(ta.positives(), 0);
    for (int l : ta.label) EXPECT_EQ(l, 0);
}

TEST(Assign, EveryGtGetsAPositiveUnderStrictThreshold) {
    auto anchors = desk_anchors();
    Rng rng(7);
    for (int scene = 0; scene < 50; ++scene) {
        std::vector<GtBox> gts;
        for (int k = 0; k < 4; ++k) gts.push_back(random_box(rng, static_cast<int>(rng.below(2))));
        auto ta = assign_targets(anchors, gts, {0.999, 0.45});
        for (std::size_t k = 0; k < gts.size(); ++k) {
            bool found = false;
            for (int i = 0; i < anchors.size(); ++i) found = found || (ta.label[i] == 1 && ta.matched[i] == int(k));
            EXPECT_TRUE(found) << "scene " << scene << " gt " << k;
        }
        for (int i = 0; i < anchors.size(); ++i)
            if (ta.label[i] == 1) EXPECT_EQ(gts[ta.matched[i]].class_id, anchors.class_of(i));
    }
}

TEST(BoxCoding, EncodeDecodeRoundTrip) {
    auto anchors = desk_anchors();
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const GtBox g = random_box(rng, static_cast<int>(rng.below(2)));
        const GtBox a = anchors.anchor(static_cast<int>(rng.below(anchors.size())));
        const auto r = encode_box(g, a);
        std::array<double, kBoxDims> rd;
        for (int j = 0; j < kBoxDims; ++j) rd[j] = r[j];
        const GtBox d = decode_box(rd, a, direction_bit(g.yaw));
        EXPECT_NEAR(d.x, g.x, 1e-5);
        EXPECT_NEAR(d.y, g.y, 1e-5);
        EXPECT_NEAR(d.z, g.z, 1e-5);
        EXPECT_NEAR(d.l, g.l, 1e-5);
        EXPECT_NEAR(d.w, g.w, 1e-5);
        EXPECT_NEAR(d.h, g.h, 1e-5);
        EXPECT_NEAR(std::sin(d.yaw), std::sin(g.yaw), 1e-3);
        EXPECT_NEAR(std::cos(d.yaw), std::cos(g.yaw), 1e-3);
    }
}

TEST(Losses, FocalReferenceValues) {
    EXPECT_NEAR(focal_loss({1.0}), 0.0, 1e-12);
    EXPECT_NEAR(focal_loss({0.5}, 2.0), 0.25 * std::log(2.0), 1e-6);
    EXPECT_NEAR(focal_loss({0.3}, 0.0), -std::log(0.3), 1e-12);
    EXPECT_NEAR(focal_loss({0.0}), -std::log(1e-6) * std::pow(1 - 1e-6, 2), 1e-9);
    double prev = 1e300;
    for (double p = 0.01; p <= 1.0; p += 0.01) {
        const double v = focal_loss({p});
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Losses, SmoothL1AndTotal) {
    EXPECT_EQ(smooth_l1(0.0), 0.0);
    EXPECT_NEAR(smooth_l1(0.5), 0.125, 1e-12);
    EXPECT_NEAR(smooth_l1(2.0), 1.5, 1e-12);
    EXPECT_NEAR(smooth_l1_loss({Residual{0.5, 2.0, 0, 0, 0, 0, 0}, Residual{}}), (0.125 + 1.5) / 2, 1e-12);
    EXPECT_NEAR(total_loss(1, 2, 3, 2), 1.05, 1e-12);
    EXPECT_EQ(total_loss(0, 0, 0, 5), 0.0);
    EXPECT_NEAR(total_loss(1, 2, 3, 4), total_loss(1, 2, 3, 2) / 2, 1e-15);
    EXPECT_EQ(total_loss(1, 0, 0, 0), 1.0);
}

TEST(Losses, TapeFocalMatchesScalarAndGradient) {
    auto z = random_tensor({12, 1}, 5, -4, 4);
    std::vector<int> y = {1, 0, -1, 1, 0, 0, 1, -1, 0, 1, 1, 0};
    Tape<double> t;
    auto loss = sigmoid_focal_sum(t.constant(z), y);
    double expect = 0;
    for (int i = 0; i < 12; ++i) {
        if (y[i] < 0) continue;
        const double p = 1.0 / (1.0 + std::exp(-z[i]));
        expect += focal_term(y[i] == 1 ? p : 1 - p, 2.0);
    }
    EXPECT_NEAR(loss.value().item(), expect, 1e-12);
    for (double gamma : {0.0, 1.0, 2.0}) {
        const double err = tctr::testing::max_grad_error(
            [&](Tape<double>&, const std::vector<Var<double>>& in) { return sigmoid_focal_sum(in[0], y, gamma); },
            {z});
        EXPECT_LT(err, 1e-6) << gamma;
    }
}

TEST(Losses, TapeSmoothL1Gradient) {
    auto p = random_tensor({5, 7}, 6, -3, 3);
    auto target = random_tensor({5, 7}, 7, -3, 3);
    const double err = tctr::testing::max_grad_error(
        [&](Tape<double>&, const std::vector<Var<double>>& in) { return smooth_l1_sum(in[0], target); }, {p});
    EXPECT_LT(err, 1e-6);
}

TEST(Nms, IdenticalCandidatesCollapse) {
    // A square footprint decodes identically at both anchor yaws.
    AnchorGrid a = AnchorGrid::make(pillars::GridConfig{}, 1, 1, {{2, 2, 1.5f, -1}});
    Tensor<double> cls({2, 1}), box({2, 7}), dir({2, 2});
    cls.fill(3.0);
    auto dets = decode_and_nms(cls, box, dir, a);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_NEAR(dets[0].score, 1.0 / (1.0 + std::exp(-3.0)), 1e-6);
}

TEST(Nms, EmptyAndOrdering) {
    auto anchors = desk_anchors();
    const int n = anchors.size();
    Tensor<double> cls({n, 1}), box({n, 7}), dir({n, 2});
    cls.fill(-10.0);
    EXPECT_TRUE(decode_and_nms(cls, box, dir, anchors).empty());
    Rng rng(2);
    for (auto& v : cls.data()) v = rng.uniform(-6, 3);
    auto dets = decode_and_nms(cls, box, dir, anchors);
    ASSERT_FALSE(dets.empty());
    EXPECT_LE(dets.size(), 100u);
    for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].score, dets[i].score);
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t j = i + 1; j < dets.size(); ++j)
            if (dets[i].box.class_id == dets[j].box.class_id) EXPECT_LE(standup_iou(dets[i].box, dets[j].box), 0.5);
    for (const auto& d : dets) EXPECT_GE(d.score, 0.1f);
}
