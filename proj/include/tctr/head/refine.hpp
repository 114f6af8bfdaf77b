// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <type_traits>

#include "tctr/numerics/ops.hpp"
#include "tctr/numerics/params.hpp"

namespace tctr::head {

enum class FusionMode { gate, concat, add, x_only, g_only };

inline FusionMode parse_fusion(const std::string& s) {
    if (s == "gate") return FusionMode::gate;
    if (s == "concat") return FusionMode::concat;
    if (s == "add") return FusionMode::add;
    if (s == "x_only") return FusionMode::x_only;
    if (s == "g_only") return FusionMode::g_only;
    throw ConfigError("unknown fusion mode '" + s + "' (expected gate, concat, add, x_only or g_only)");
}

inline std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::gate: return "gate";
        case FusionMode::concat: return "concat";
        case FusionMode::add: return "add";
        case FusionMode::x_only: return "x_only";
        case FusionMode::g_only: return "g_only";
    }
    return "?";
}

/// F = X * sigmoid(g)
template <typename T>
num::Var<T> gate_fuse(const num::Var<T>& x, const num::Var<T>& g) {
    if (x.dims() != g.dims())
        throw ShapeError("gate_fuse: " + dims_to_string(x.dims()) + " vs " + dims_to_string(g.dims()));
    return num::mul(x, num::sigmoid(g));
}

template <typename T>
void declare_fusion(num::ParamStore<T>& s, FusionMode mode, int c1, const std::string& p = "fuse") {
    if (mode == FusionMode::concat) {
        s.declare(p + ".concat.w", {c1, 2 * c1, 1, 1}, num::Init::kaiming);
        s.declare(p + ".concat.b", {c1}, num::Init::zeros);
    }
}

template <typename T>
num::Var<T> fuse_variant(num::Tape<T>& t, const num::ParamStore<T>& s, const num::Var<T>& x, const num::Var<T>& g,
                         FusionMode mode, const std::string& p = "fuse") {
    if (mode != FusionMode::x_only && x.dims() != g.dims())
        throw ShapeError("fuse_variant: " + dims_to_string(x.dims()) + " vs " + dims_to_string(g.dims()));
    switch (mode) {
        case FusionMode::gate: return gate_fuse(x, g);
        case FusionMode::add: return num::add(x, g);
        case FusionMode::x_only: return x;
        case FusionMode::g_only: return g;
        case FusionMode::concat:
            return num::conv2d(num::concat0<T>({x, g}), t.param(s, p + ".concat.w"), t.param(s, p + ".concat.b"));
    }
    throw ConfigError("unknown fusion mode");
}

/// Each stage: F <- relu(conv3x3(up2(F))); with gating also g <- conv1x1(up2(g)) and
/// F <- F * sigmoid(g).
template <typename T>
void declare_refine(num::ParamStore<T>& s, int c_in, int width, int stages, bool gated, int g_channels,
                    const std::string& p = "refine") {
    int c = c_in, cg = g_channels;
    for (int i = 0; i < stages; ++i) {
        const std::string st = p + ".stage" + std::to_string(i);
        s.declare(st + ".conv.w", {width, c, 3, 3}, num::Init::kaiming);
        s.declare(st + ".conv.b", {width}, num::Init::zeros);
        if (gated) {
            s.declare(st + ".gate.w", {width, cg, 1, 1}, num::Init::kaiming);
            s.declare(st + ".gate.b", {width}, num::Init::zeros);
        }
        c = cg = width;
    }
}

template <typename T>
num::Var<T> upsample_refine(num::Tape<T>& t, const num::ParamStore<T>& s, num::Var<T> f,
                            std::type_identity_t<const num::Var<T>*> g,
                            int stages, const std::string& p = "refine") {
    std::optional<num::Var<T>> gate;
    if (g) gate = *g;
    for (int i = 0; i < stages; ++i) {
        const std::string st = p + ".stage" + std::to_string(i);
        f = num::relu(num::conv2d(num::upsample2x(f), t.param(s, st + ".conv.w"), t.param(s, st + ".conv.b"), 1, 1));
        if (gate) {
            gate = num::conv2d(num::upsample2x(*gate), t.param(s, st + ".gate.w"), t.param(s, st + ".gate.b"));
            f = gate_fuse(f, *gate);
        }
    }
    return f;
}

}  // namespace tctr::head
