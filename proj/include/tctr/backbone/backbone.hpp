// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tctr/numerics/ops.hpp"
#include "tctr/numerics/params.hpp"

namespace tctr::backbone {

/// Two 3x3 stem convs (each optionally followed by a 2x2 max-pool), residual blocks with an optional 2x2 max-pool after each, and a
/// merge of the last two stages into C1 output channels.
struct BackboneConfig {
    int in_channels = 32;
    int stem_width = 16;
    std::vector<bool> stem_pool = {false, false};
    std::vector<int> block_widths = {16, 32, 64, 64};
    std::vector<bool> pool_after = {true, true, true, false};
    int out_channels = 64;

    int downsample() const {
        int d = 1;
        for (bool p : stem_pool) d *= p ? 2 : 1;
        for (bool p : pool_after) d *= p ? 2 : 1;
        return d;
    }

    void validate() const {
        if (stem_pool.size() != 2) throw ConfigError("backbone needs exactly two stem pool flags");
        if (block_widths.size() < 2) throw ConfigError("backbone needs at least two residual blocks");
        if (pool_after.size() != block_widths.size())
            throw ConfigError("backbone pool_after must have one flag per block");
        if (in_channels < 1 || stem_width < 1 || out_channels < 1) throw ConfigError("backbone widths must be >= 1");
        if (pool_after.back()) throw ConfigError("backbone must not pool after the last block");
        for (int w : block_widths)
            if (w < 1) throw ConfigError("backbone block widths must be >= 1");
    }
};

namespace detail {

template <typename T>
void declare_conv(num::ParamStore<T>& s, const std::string& name, int cout, int cin, int k, bool bias = true) {
    s.declare(name + ".w", {cout, cin, k, k}, num::Init::kaiming);
    if (bias) s.declare(name + ".b", {cout}, num::Init::zeros);
}

template <typename T>
num::Var<T> conv(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& name, const num::Var<T>& x,
                 bool bias = true) {
    auto w = t.param(s, name + ".w");
    const int pad = w.dim(2) / 2;
    if (!bias) return num::conv2d(x, w, nullptr, 1, pad);
    return num::conv2d(x, w, t.param(s, name + ".b"), 1, pad);
}

}  // namespace detail

template <typename T>
void declare_backbone(num::ParamStore<T>& s, const BackboneConfig& cfg, const std::string& p = "backbone") {
    cfg.validate();
    detail::declare_conv(s, p + ".stem0", cfg.stem_width, cfg.in_channels, 3);
    detail::declare_conv(s, p + ".stem1", cfg.stem_width, cfg.stem_width, 3);
    int cin = cfg.stem_width;
    for (std::size_t i = 0; i < cfg.block_widths.size(); ++i) {
        const int w = cfg.block_widths[i];
        const std::string b = p + ".block" + std::to_string(i);
        detail::declare_conv(s, b + ".conv0", w, cin, 3);
        detail::declare_conv(s, b + ".conv1", w, w, 3);
        if (w != cin) detail::declare_conv(s, b + ".skip", w, cin, 1, false);
        cin = w;
    }
    const std::size_t n = cfg.block_widths.size();
    detail::declare_conv(s, p + ".lateral", cfg.out_channels, cfg.block_widths[n - 1], 1);
    detail::declare_conv(s, p + ".merge", cfg.out_channels, cfg.block_widths[n - 2], 1, false);
}

/// relu(conv1(relu(conv0(x))) + skip(x)); skip is a bias-free 1x1 conv when widths differ.
template <typename T>
num::Var<T> resblock_forward(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& b,
                             const num::Var<T>& x) {
    auto h = num::relu(detail::conv(t, s, b + ".conv0", x));
    h = detail::conv(t, s, b + ".conv1", h);
    auto skip = s.contains(b + ".skip.w") ? detail::conv(t, s, b + ".skip", x, false) : x;
    return num::relu(num::add(h, skip));
}

/// Maps one pseudo-image [C0 x H0 x W0] to X [C1 x H0/D x W0/D]. The last stage is
/// projected by a 1x1 conv and summed with a 1x1 projection of the (pooled) previous
/// stage, both at the output resolution.
template <typename T>
num::Var<T> backbone_forward(num::Tape<T>& t, const num::ParamStore<T>& s, const BackboneConfig& cfg,
                             const num::Var<T>& image, const std::string& p = "backbone") {
    const auto& d = image.dims();
    const int D = cfg.downsample();
    if (d.size() != 3 || d[0] != cfg.in_channels || d[1] % D != 0 || d[2] % D != 0)
        throw ShapeError("backbone: input " + dims_to_string(d) + " does not fit " +
                         std::to_string(cfg.in_channels) + " channels with downsample " + std::to_string(D));
    auto x = image;
    for (int i = 0; i < 2; ++i) {
        x = num::relu(detail::conv(t, s, p + ".stem" + std::to_string(i), x));
        if (cfg.stem_pool[i]) x = num::maxpool2d(x);
    }
    std::vector<num::Var<T>> stages;
    for (std::size_t i = 0; i < cfg.block_widths.size(); ++i) {
        x = resblock_forward(t, s, p + ".block" + std::to_string(i), x);
        if (cfg.pool_after[i]) x = num::maxpool2d(x);
        stages.push_back(x);
    }
    auto top = detail::conv(t, s, p + ".lateral", stages.back());
    auto prev = detail::conv(t, s, p + ".merge", stages[stages.size() - 2], false);
    return num::add(top, prev);
}

}  // namespace tctr::backbone
