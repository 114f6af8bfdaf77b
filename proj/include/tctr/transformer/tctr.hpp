// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tctr/transformer/attention.hpp"

namespace tctr::transformer {

enum class EncoderVariant { tc_encoder, t_encoder, c_encoder };

inline EncoderVariant parse_variant(const std::string& s) {
    if (s == "tc_encoder") return EncoderVariant::tc_encoder;
    if (s == "t_encoder") return EncoderVariant::t_encoder;
    if (s == "c_encoder") return EncoderVariant::c_encoder;
    throw ConfigError("unknown encoder variant '" + s + "' (expected tc_encoder, t_encoder or c_encoder)");
}

inline std::string to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::tc_encoder: return "tc_encoder";
        case EncoderVariant::t_encoder: return "t_encoder";
        case EncoderVariant::c_encoder: return "c_encoder";
    }
    return "?";
}

struct TctrConfig {
    int T = 1;
    int c1 = 64;  // backbone channels in and g channels out
    int h1 = 8, w1 = 8;
    int c2 = 16;
    int c3 = 32;
    int enc_blocks = 2;
    int dec_blocks = 2;
    int heads = 4;
    int dk = 16;
    int ffn_hidden = 128;
    EncoderVariant variant = EncoderVariant::tc_encoder;
    bool encoder_pe = true;

    int frames() const { return 2 * T + 1; }
    int voxels() const { return h1 * w1; }

    int memory_tokens() const {
        switch (variant) {
            case EncoderVariant::t_encoder: return frames();
            case EncoderVariant::c_encoder: return c2;
            default: return frames() * c2;
        }
    }

    void validate() const {
        if (T < 0) throw ConfigError("T must be >= 0");
        if (c1 < 1 || c2 < 1 || h1 < 1 || w1 < 1) throw ConfigError("tctr widths and extents must be >= 1");
        if (c3 < 4 || c3 % 4 != 0) throw ConfigError("tctr c3 must be a positive multiple of 4");
        if (voxels() % 2 != 0) throw ConfigError("tctr h1*w1 must be even for the encoder positional encoding");
        if (enc_blocks < 0 || dec_blocks < 0) throw ConfigError("tctr block counts must be >= 0");
        if (heads < 1 || dk < 1 || ffn_hidden < 1) throw ConfigError("tctr heads, dk and ffn_hidden must be >= 1");
    }
};

template <typename T>
void declare_tctr(num::ParamStore<T>& s, const TctrConfig& c, const std::string& p = "tctr") {
    c.validate();
    const int hw = c.voxels();
    s.declare(p + ".tok.w", {c.c2, c.c1, 1, 1}, num::Init::kaiming);
    s.declare(p + ".tok.b", {c.c2}, num::Init::zeros);
    if (c.variant == EncoderVariant::t_encoder) {
        s.declare(p + ".tproj.w", {c.c2 * hw, hw}, num::Init::linear);
        s.declare(p + ".tproj.b", {hw}, num::Init::zeros);
    }
    for (int m = 0; m < c.enc_blocks; ++m) {
        const std::string b = p + ".enc" + std::to_string(m);
        declare_mha(s, b + ".attn", {hw, hw, c.heads, c.dk});
        declare_norm(s, b + ".ln1", hw);
        declare_ffn(s, b + ".ffn", hw, c.ffn_hidden);
        declare_norm(s, b + ".ln2", hw);
    }
    s.declare(p + ".dec.in.w", {c.c3, c.c1, 1, 1}, num::Init::kaiming);
    s.declare(p + ".dec.in.b", {c.c3}, num::Init::zeros);
    for (int m = 0; m < c.dec_blocks; ++m) {
        const std::string b = p + ".dec" + std::to_string(m);
        declare_mha(s, b + ".self", {c.c3, c.c3, c.heads, c.dk});
        declare_norm(s, b + ".ln1", c.c3);
        declare_mha(s, b + ".cross", {c.c3, hw, c.heads, c.dk});
        declare_norm(s, b + ".ln2", c.c3);
        declare_ffn(s, b + ".ffn", c.c3, c.ffn_hidden);
        declare_norm(s, b + ".ln3", c.c3);
    }
    s.declare(p + ".dec.out.w", {c.c1, c.c3, 1, 1}, num::Init::kaiming);
    s.declare(p + ".dec.out.b", {c.c1}, num::Init::zeros);
}

namespace detail {

template <typename T>
num::Var<T> conv1x1(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& p, const num::Var<T>& x) {
    return num::conv2d(x, t.param(s, p + ".w"), t.param(s, p + ".b"));
}

template <typename T>
void check_frames(const std::vector<num::Var<T>>& xs, const TctrConfig& c) {
    if (xs.empty()) throw ShapeError("tctr: empty frame list");
    const num::Dims want{c.c1, c.h1, c.w1};
    for (const auto& x : xs)
        if (x.dims() != want)
            throw ShapeError("tctr: frame features " + dims_to_string(x.dims()) + ", expected " +
                             dims_to_string(want));
}

}  // namespace detail

/// Z [(N*C2) x (H1*W1)]: each frame is 1x1-projected to C2 channels and every channel
/// becomes one token holding its row-major flattened map. Token = frame * C2 + channel.
template <typename T>
num::Var<T> tokenize_channels(num::Tape<T>& t, const num::ParamStore<T>& s, const std::vector<num::Var<T>>& xs,
                              const TctrConfig& c, const std::string& p = "tctr") {
    detail::check_frames(xs, c);
    std::vector<num::Var<T>> blocks;
    for (const auto& x : xs) blocks.push_back(num::reshape(detail::conv1x1(t, s, p + ".tok", x), {c.c2, c.voxels()}));
    return blocks.size() == 1 ? blocks[0] : num::concat0(blocks);
}

/// M post-norm blocks of self-attention and FFN over a token matrix, optionally after
/// adding the sinusoidal positional encoding.
template <typename T>
num::Var<T> encoder_stack(num::Tape<T>& t, const num::ParamStore<T>& s, num::Var<T> z, const TctrConfig& c,
                          AttentionProbe<T>* probe = nullptr, const std::string& p = "tctr") {
    if (c.encoder_pe) z = num::add(z, t.constant(positional_encoding<T>(z.dim(0), z.dim(1))));
    for (int m = 0; m < c.enc_blocks; ++m) {
        const std::string b = p + ".enc" + std::to_string(m);
        z = add_norm(t, s, b + ".ln1", z, mha(t, s, b + ".attn", z, z, z, c.heads, probe));
        z = add_norm(t, s, b + ".ln2", z, ffn(t, s, b + ".ffn", z));
    }
    return z;
}

/// Temporal-channel encoder over all N frames: memory [(N*C2) x (H1*W1)].
template <typename T>
num::Var<T> encode_tc(num::Tape<T>& t, const num::ParamStore<T>& s, const std::vector<num::Var<T>>& xs,
                      const TctrConfig& c, AttentionProbe<T>* probe = nullptr, const std::string& p = "tctr") {
    if (static_cast<int>(xs.size()) != c.frames())
        throw ShapeError("tctr: expected " + std::to_string(c.frames()) + " frames, got " + std::to_string(xs.size()));
    return encoder_stack(t, s, tokenize_channels(t, s, xs, c, p), c, probe, p);
}

/// Encoder ablations. t_encoder: one token per frame (its whole C2*H1*W1 map projected to
/// H1*W1); c_encoder: the C2 channel tokens of the target (middle) frame only.
template <typename T>
num::Var<T> encode_variant(num::Tape<T>& t, const num::ParamStore<T>& s, const std::vector<num::Var<T>>& xs,
                           const TctrConfig& c, AttentionProbe<T>* probe = nullptr, const std::string& p = "tctr") {
    switch (c.variant) {
        case EncoderVariant::tc_encoder:
            return encode_tc(t, s, xs, c, probe, p);
        case EncoderVariant::t_encoder: {
            if (static_cast<int>(xs.size()) != c.frames())
                throw ShapeError("tctr: expected " + std::to_string(c.frames()) + " frames, got " +
                                 std::to_string(xs.size()));
            auto z = num::reshape(tokenize_channels(t, s, xs, c, p), {c.frames(), c.c2 * c.voxels()});
            z = num::add_row_bias(num::matmul(z, t.param(s, p + ".tproj.w")), t.param(s, p + ".tproj.b"));
            return encoder_stack(t, s, z, c, probe, p);
        }
        case EncoderVariant::c_encoder: {
            if (static_cast<int>(xs.size()) != c.frames())
                throw ShapeError("tctr: expected " + std::to_string(c.frames()) + " frames, got " +
                                 std::to_string(xs.size()));
            return encoder_stack(t, s, tokenize_channels(t, s, {xs[c.T]}, c, p), c, probe, p);
        }
    }
    throw ConfigError("unknown encoder variant");
}

/// Spatial decoder: target-frame voxels query the encoder memory. Returns g [C1 x H1 x W1].
template <typename T>
num::Var<T> decode_spatial(num::Tape<T>& t, const num::ParamStore<T>& s, const num::Var<T>& x_t,
                           const num::Var<T>& mem, const TctrConfig& c, AttentionProbe<T>* probe = nullptr,
                           const std::string& p = "tctr") {
    detail::check_frames<T>({x_t}, c);
    const int hw = c.voxels();
    if (mem.dims().size() != 2 || mem.dim(1) != hw)
        throw ShapeError("tctr decoder: memory " + dims_to_string(mem.dims()) + " does not have width " +
                         std::to_string(hw));
    auto sv = num::transpose(num::reshape(detail::conv1x1(t, s, p + ".dec.in", x_t), {c.c3, hw}));
    sv = num::add(sv, t.constant(positional_encoding_2d<T>(c.h1, c.w1, c.c3)));
    for (int m = 0; m < c.dec_blocks; ++m) {
        const std::string b = p + ".dec" + std::to_string(m);
        sv = add_norm(t, s, b + ".ln1", sv, mha(t, s, b + ".self", sv, sv, sv, c.heads, probe));
        sv = add_norm(t, s, b + ".ln2", sv, mha(t, s, b + ".cross", sv, mem, mem, c.heads, probe));
        sv = add_norm(t, s, b + ".ln3", sv, ffn(t, s, b + ".ffn", sv));
    }
    auto back = num::reshape(num::transpose(sv), {c.c3, c.h1, c.w1});
    return detail::conv1x1(t, s, p + ".dec.out", back);
}

}  // namespace tctr::transformer
