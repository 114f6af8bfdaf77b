// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "support/finite_diff.hpp"
#include "tctr/transformer/tctr.hpp"

using namespace tctr;
using namespace tctr::num;
using namespace tctr::transformer;
using tctr::testing::random_tensor;

namespace {

std::vector<Var<double>> frames(Tape<double>& t, const TctrConfig& c, std::uint64_t seed) {
    std::vector<Var<double>> xs;
    for (int i = 0; i < c.frames(); ++i) xs.push_back(t.constant(random_tensor({c.c1, c.h1, c.w1}, seed + i)));
    return xs;
}

TctrConfig small_config() {
    TctrConfig c;
    c.c1 = 6;
    c.h1 = 4;
    c.w1 = 4;
    c.c2 = 3;
    c.c3 = 8;
    c.heads = 2;
    c.dk = 4;
    c.ffn_hidden = 10;
    c.enc_blocks = 1;
    c.dec_blocks = 1;
    return c;
}

Tensor<double> permute_rows(const Tensor<double>& x, const std::vector<int>& perm) {
    Tensor<double> out(x.dims());
    for (int i = 0; i < x.dim(0); ++i)
        for (int j = 0; j < x.dim(1); ++j) out.at(i, j) = x.at(perm[i], j);
    return out;
}

double row_sum_error(const Tensor<double>& a) {
    double worst = 0;
    for (int i = 0; i < a.dim(0); ++i) {
        double sum = 0;
        for (int j = 0; j < a.dim(1); ++j) sum += a.at(i, j);
        worst = std::max(worst, std::abs(sum - 1));
    }
    return worst;
}

}  // namespace

TEST(Mha, SingleKeyGetsFullWeight) {
    ParamStore<double> s(1);
    declare_mha(s, "a", {5, 3, 2, 4});
    Tape<double> t;
    auto q = t.constant(random_tensor({4, 5}, 2));
    auto kv = t.constant(random_tensor({1, 3}, 3));
    AttentionProbe<double> probe;
    auto out = mha(t, s, "a", q, kv, kv, 2, &probe);
    ASSERT_EQ(probe.maps.size(), 2u);
    for (const auto& [name, a] : probe.maps)
        for (double w : a.data()) EXPECT_EQ(w, 1.0);
    // Every query row reduces to (kv wv) wo.
    Tape<double> t2;
    auto expect = matmul(matmul(t2.constant(kv.value()), t2.param(s, "a.wv")), t2.param(s, "a.wo"));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) EXPECT_NEAR(out.value().at(i, j), expect.value().at(0, j), 1e-14);
}

TEST(Mha, IdenticalKeysAverageValues) {
    ParamStore<double> s(1);
    declare_mha(s, "a", {5, 3, 1, 4});
    Tape<double> t;
    auto q = t.constant(random_tensor({2, 5}, 2));
    Tensor<double> k({2, 3});
    for (int j = 0; j < 3; ++j) k.at(0, j) = k.at(1, j) = 0.1 * (j + 1);
    auto v = t.constant(random_tensor({2, 3}, 4));
    AttentionProbe<double> probe;
    auto out = mha(t, s, "a", q, t.constant(k), v, 1, &probe);
    for (double w : probe.maps[0].second.data()) EXPECT_DOUBLE_EQ(w, 0.5);
    auto pv = matmul(v, t.param(s, "a.wv")).value();
    Tensor<double> mean({1, 4});
    for (int j = 0; j < 4; ++j) mean.at(0, j) = 0.5 * (pv.at(0, j) + pv.at(1, j));
    auto expect = matmul(t.constant(mean), t.param(s, "a.wo")).value();
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(out.value().at(1, j), expect.at(0, j), 1e-14);
}

TEST(Mha, WeightRowsAreStochastic) {
    ParamStore<double> s(3);
    declare_mha(s, "a", {8, 8, 4, 4});
    for (int trial = 0; trial < 10; ++trial) {
        Tape<double> t;
        auto x = t.constant(random_tensor({7, 8}, 10 + trial, -50, 50));
        AttentionProbe<double> probe;
        mha(t, s, "a", x, x, x, 4, &probe);
        for (const auto& [name, a] : probe.maps) EXPECT_LT(row_sum_error(a), 1e-6);
    }
}

TEST(Mha, KeyValueTokenMismatchIsShapeError) {
    ParamStore<double> s(3);
    declare_mha(s, "a", {4, 4, 1, 4});
    Tape<double> t;
    auto q = t.constant(random_tensor({3, 4}, 1));
    EXPECT_THROW(mha(t, s, "a", q, t.constant(random_tensor({3, 4}, 2)), t.constant(random_tensor({2, 4}, 3)), 1),
                 ShapeError);
}

TEST(PositionalEncoding, ZeroPositionAndBounds) {
    auto pe = positional_encoding<double>(50, 16);
    for (int j = 0; j < 16; ++j) EXPECT_EQ(pe.at(0, j), j % 2 == 0 ? 0.0 : 1.0);
    for (double v : pe.data()) {
        EXPECT_LE(v, 1.0);
        EXPECT_GE(v, -1.0);
    }
    EXPECT_THROW(positional_encoding<double>(4, 3), ShapeError);
}

TEST(PositionalEncoding, RowsAreDistinct) {
    for (int d : {2, 4, 64}) {
        auto pe = positional_encoding<double>(4096, d);
        std::set<std::vector<double>> seen;
        for (int i = 0; i < 4096; ++i) seen.insert(std::vector<double>(&pe.at(i, 0), &pe.at(i, 0) + d));
        EXPECT_EQ(seen.size(), 4096u) << "d=" << d;
    }
}

TEST(PositionalEncoding, TwoDimensionalSplitsRowAndColumn) {
    auto pe = positional_encoding_2d<double>(3, 5, 8);
    auto row = positional_encoding<double>(3, 4), col = positional_encoding<double>(5, 4);
    EXPECT_EQ(pe.dims(), (Dims{15, 8}));
    for (int j = 0; j < 4; ++j) {
        EXPECT_EQ(pe.at(2 * 5 + 3, j), row.at(2, j));
        EXPECT_EQ(pe.at(2 * 5 + 3, 4 + j), col.at(3, j));
    }
    EXPECT_THROW(positional_encoding_2d<double>(3, 5, 6), ShapeError);
}

TEST(Tokenize, DeskShapeAndLayout) {
    TctrConfig c;
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 40);
    auto z = tokenize_channels(t, s, xs, c);
    EXPECT_EQ(z.dims(), (Dims{48, 64}));
    auto x1 = conv2d(xs[1], t.param(s, "tctr.tok.w"), t.param(s, "tctr.tok.b")).value();
    for (int ch = 0; ch < c.c2; ++ch)
        for (int l = 0; l < 64; ++l) EXPECT_EQ(z.value().at(1 * c.c2 + ch, l), x1[ch * 64 + l]);
}

TEST(Tokenize, FrameOrderPermutesTokenBlocks) {
    TctrConfig c = small_config();
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 5);
    auto z = tokenize_channels(t, s, xs, c).value();
    auto zr = tokenize_channels(t, s, {xs[2], xs[0], xs[1]}, c).value();
    const int order[3] = {2, 0, 1};
    for (int f = 0; f < 3; ++f)
        for (int ch = 0; ch < c.c2; ++ch)
            for (int l = 0; l < c.voxels(); ++l) EXPECT_EQ(zr.at(f * c.c2 + ch, l), z.at(order[f] * c.c2 + ch, l));
}

TEST(Tokenize, InconsistentFramesAreShapeErrors) {
    TctrConfig c = small_config();
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 5);
    xs[1] = t.constant(random_tensor({c.c1, c.h1, c.w1 * 2}, 1));
    EXPECT_THROW(tokenize_channels(t, s, xs, c), ShapeError);
}

TEST(Encoder, DeskShapeAndEmptyStack) {
    TctrConfig c;
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 1);
    EXPECT_EQ(encode_tc(t, s, xs, c).dims(), (Dims{48, 64}));
    c.enc_blocks = 0;
    auto mem = encode_tc(t, s, xs, c).value();
    auto z = tokenize_channels(t, s, xs, c).value();
    auto pe = positional_encoding<double>(48, 64);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(mem[i], z[i] + pe[i]);
}

TEST(Encoder, PermutationEquivariantWithoutPositionalEncoding) {
    TctrConfig c;
    c.encoder_pe = false;
    ParamStore<double> s(6);
    declare_tctr(s, c);
    Rng rng(3);
    auto z = random_tensor({48, 64}, 8);
    Tape<double> t;
    auto base = encoder_stack(t, s, t.constant(z), c).value();
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<int> perm(48);
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = 47; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        Tape<double> tp;
        auto out = encoder_stack(tp, s, tp.constant(permute_rows(z, perm)), c).value();
        EXPECT_EQ(out, permute_rows(base, perm));
        c.encoder_pe = true;
        Tape<double> tq;
        auto with_pe = encoder_stack(tq, s, tq.constant(permute_rows(z, perm)), c).value();
        Tape<double> tr;
        auto base_pe = encoder_stack(tr, s, tr.constant(z), c).value();
        EXPECT_NE(with_pe, permute_rows(base_pe, perm));
        c.encoder_pe = false;
    }
}

TEST(Encoder, VariantsTokenCounts) {
    TctrConfig c;
    for (auto v : {EncoderVariant::t_encoder, EncoderVariant::c_encoder, EncoderVariant::tc_encoder}) {
        c.variant = v;
        ParamStore<double> s(2);
        declare_tctr(s, c);
        Tape<double> t;
        auto mem = encode_variant(t, s, frames(t, c, 1), c);
        EXPECT_EQ(mem.dim(0), c.memory_tokens());
        EXPECT_EQ(mem.dim(1), 64);
        if (v == EncoderVariant::tc_encoder) EXPECT_EQ(mem.value(), encode_tc(t, s, frames(t, c, 1), c).value());
    }
    c.variant = EncoderVariant::t_encoder;
    EXPECT_EQ(c.memory_tokens(), 3);
    c.variant = EncoderVariant::c_encoder;
    c.T = 3;
    EXPECT_EQ(c.memory_tokens(), 16);
    EXPECT_THROW(parse_variant("x_encoder"), ConfigError);
    EXPECT_EQ(parse_variant("t_encoder"), EncoderVariant::t_encoder);
}

TEST(Decoder, CrossAttentionShapeAndStochasticity) {
    TctrConfig c;
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 1);
    auto mem = encode_tc(t, s, xs, c);
    AttentionProbe<double> probe;
    auto g = decode_spatial(t, s, xs[1], mem, c, &probe);
    EXPECT_EQ(g.dims(), (Dims{64, 8, 8}));
    auto cross = probe.find("tctr.dec0.cross");
    ASSERT_EQ(cross.size(), 4u);
    for (const auto* a : cross) {
        EXPECT_EQ(a->dims(), (Dims{64, 48}));
        EXPECT_LT(row_sum_error(*a), 1e-6);
    }
}

TEST(Decoder, ZeroCrossValuesCutTheMemoryPath) {
    TctrConfig c = small_config();
    c.dec_blocks = 2;
    ParamStore<double> s(2);
    declare_tctr(s, c);
    for (int m = 0; m < 2; ++m) s.value("tctr.dec" + std::to_string(m) + ".cross.wv").fill(0);
    Tape<double> t;
    auto xs = frames(t, c, 1);
    auto g1 = decode_spatial(t, s, xs[1], encode_tc(t, s, xs, c), c).value();
    auto g2 = decode_spatial(t, s, xs[1], encode_tc(t, s, frames(t, c, 50), c), c).value();
    EXPECT_EQ(g1, g2);
}

TEST(Decoder, MemoryWidthMismatchIsShapeError) {
    TctrConfig c = small_config();
    ParamStore<double> s(2);
    declare_tctr(s, c);
    Tape<double> t;
    auto xs = frames(t, c, 1);
    EXPECT_THROW(decode_spatial(t, s, xs[1], t.constant(random_tensor({9, 15}, 1)), c), ShapeError);
}

TEST(Decoder, RandomConfigsKeepShapeContracts) {
    Rng rng(17);
    for (int trial = 0; trial < 12; ++trial) {
        TctrConfig c;
        c.T = static_cast<int>(rng.below(3));
        c.c1 = 1 + static_cast<int>(rng.below(6));
        c.h1 = 1 + static_cast<int>(rng.below(5));
        c.w1 = 2 * (1 + static_cast<int>(rng.below(3)));
        c.c2 = 1 + static_cast<int>(rng.below(4));
        c.c3 = 4 * (1 + static_cast<int>(rng.below(3)));
        c.heads = 1 + static_cast<int>(rng.below(3));
        c.dk = 1 + static_cast<int>(rng.below(4));
        c.ffn_hidden = 1 + static_cast<int>(rng.below(8));
        c.enc_blocks = static_cast<int>(rng.below(3));
        c.dec_blocks = 1 + static_cast<int>(rng.below(2));
        ParamStore<double> s(trial);
        declare_tctr(s, c);
        Tape<double> t;
        auto xs = frames(t, c, 100 + trial);
        auto mem = encode_tc(t, s, xs, c);
        EXPECT_EQ(mem.dims(), (Dims{c.frames() * c.c2, c.voxels()}));
        AttentionProbe<double> probe;
        auto g = decode_spatial(t, s, xs[c.T], mem, c, &probe);
        EXPECT_EQ(g.dims(), xs[c.T].dims());
        for (const auto* a : probe.find("tctr.dec0.cross")) {
            EXPECT_EQ(a->dims(), (Dims{c.voxels(), c.frames() * c.c2}));
            EXPECT_LT(row_sum_error(*a), 1e-6);
        }
    }
}

TEST(Tctr, GradientsMatchFiniteDifferences) {
    TctrConfig c = small_config();
    c.dec_blocks = 2;
    for (auto v : {EncoderVariant::tc_encoder, EncoderVariant::t_encoder, EncoderVariant::c_encoder}) {
        c.variant = v;
        ParamStore<double> s(12);
        declare_tctr(s, c);
        for (const auto& n : s.names())
            if (n.ends_with(".b") || n.ends_with(".b1") || n.ends_with(".b2") || n.ends_with(".g"))
                for (auto& x : s.value(n).data()) x += 0.1 * std::sin(3.0 * x + n.size());
        auto errs = tctr::testing::param_grad_errors(s, [&](Tape<double>& t, const ParamStore<double>& st) {
            auto xs = frames(t, c, 70);
            auto g = decode_spatial(t, st, xs[c.T], encode_variant(t, st, xs, c), c);
            return tctr::testing::random_readout(g, 3);
        }, 16);
        for (const auto& [name, e] : errs) EXPECT_LT(e, 1e-5) << to_string(v) << " " << name;
    }
}
