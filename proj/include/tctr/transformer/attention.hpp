// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tctr/numerics/ops.hpp"
#include "tctr/numerics/params.hpp"

namespace tctr::transformer {

/// Optional sink for attention weight matrices, one entry per head per call.
template <typename T>
struct AttentionProbe {
    std::vector<std::pair<std::string, num::Tensor<T>>> maps;

    std::vector<const num::Tensor<T>*> find(const std::string& prefix) const {
        std::vector<const num::Tensor<T>*> out;
        for (const auto& [name, m] : maps)
            if (name.rfind(prefix, 0) == 0) out.push_back(&m);
        return out;
    }
};

struct MhaShape {
    int q_in = 0;   // query token width; also the output width
    int kv_in = 0;  // key/value token width
    int heads = 4;
    int dk = 16;
};

/// Projections without biases: wq [q_in x h*dk], wk, wv [kv_in x h*dk], wo [h*dk x q_in].
template <typename T>
void declare_mha(num::ParamStore<T>& s, const std::string& p, const MhaShape& m) {
    const int hd = m.heads * m.dk;
    s.declare(p + ".wq", {m.q_in, hd}, num::Init::linear);
    s.declare(p + ".wk", {m.kv_in, hd}, num::Init::linear);
    s.declare(p + ".wv", {m.kv_in, hd}, num::Init::linear);
    s.declare(p + ".wo", {hd, m.q_in}, num::Init::linear);
}

/// Multi-head scaled dot-product attention. Output has one row per query token.
template <typename T>
num::Var<T> mha(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& p, const num::Var<T>& q_in,
                const num::Var<T>& k_in, const num::Var<T>& v_in, int heads, AttentionProbe<T>* probe = nullptr) {
    if (k_in.dims().size() != 2 || v_in.dims().size() != 2 || k_in.dim(0) != v_in.dim(0))
        throw ShapeError("mha " + p + ": key tokens " + dims_to_string(k_in.dims()) + " vs value tokens " +
                         dims_to_string(v_in.dims()));
    auto wq = t.param(s, p + ".wq");
    const int hd = wq.dim(1);
    if (heads < 1 || hd % heads != 0) throw ShapeError("mha " + p + ": projection width not divisible by heads");
    const int dk = hd / heads;
    auto q = num::matmul(q_in, wq);
    auto k = num::matmul(k_in, t.param(s, p + ".wk"));
    auto v = num::matmul(v_in, t.param(s, p + ".wv"));
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<num::Var<T>> outs;
    for (int h = 0; h < heads; ++h) {
        auto qh = num::col_slice(q, h * dk, dk);
        auto kh = num::transpose(num::col_slice(k, h * dk, dk));
        auto a = num::softmax_rows(num::scale(num::matmul(qh, kh), scale));
        if (probe) probe->maps.emplace_back(p + ".h" + std::to_string(h), a.value());
        outs.push_back(num::matmul_sorted(a, num::col_slice(v, h * dk, dk)));
    }
    return num::matmul(heads == 1 ? outs[0] : num::concat_cols(outs), t.param(s, p + ".wo"));
}

/// Two-layer ReLU feed-forward network applied per token.
template <typename T>
void declare_ffn(num::ParamStore<T>& s, const std::string& p, int d, int hidden) {
    s.declare(p + ".w1", {d, hidden}, num::Init::kaiming);
    s.declare(p + ".b1", {hidden}, num::Init::zeros);
    s.declare(p + ".w2", {hidden, d}, num::Init::linear);
    s.declare(p + ".b2", {d}, num::Init::zeros);
}

template <typename T>
num::Var<T> ffn(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& p, const num::Var<T>& x) {
    auto h = num::relu(num::add_row_bias(num::matmul(x, t.param(s, p + ".w1")), t.param(s, p + ".b1")));
    return num::add_row_bias(num::matmul(h, t.param(s, p + ".w2")), t.param(s, p + ".b2"));
}

template <typename T>
void declare_norm(num::ParamStore<T>& s, const std::string& p, int d) {
    s.declare(p + ".g", {d}, num::Init::ones);
    s.declare(p + ".b", {d}, num::Init::zeros);
}

/// layer_norm(x + y) with the gain/bias stored under `p`.
template <typename T>
num::Var<T> add_norm(num::Tape<T>& t, const num::ParamStore<T>& s, const std::string& p, const num::Var<T>& x,
                     const num::Var<T>& y) {
    return num::layer_norm(num::add(x, y), t.param(s, p + ".g"), t.param(s, p + ".b"));
}

/// Sinusoidal encoding: PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
template <typename T>
num::Tensor<T> positional_encoding(int tokens, int d) {
    if (tokens < 1 || d < 2 || d % 2 != 0)
        throw ShapeError("positional_encoding needs tokens >= 1 and an even width, got " + std::to_string(tokens) +
                         "x" + std::to_string(d));
    num::Tensor<T> pe({tokens, d});
    for (int pos = 0; pos < tokens; ++pos)
        for (int i = 0; i < d / 2; ++i) {
            const double angle = pos / std::pow(10000.0, 2.0 * i / d);
            pe.at(pos, 2 * i) = static_cast<T>(std::sin(angle));
            pe.at(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
        }
    return pe;
}

/// 2D variant over an h x w grid flattened row-major: the first d/2 channels encode the
/// row, the rest the column.
template <typename T>
num::Tensor<T> positional_encoding_2d(int h, int w, int d) {
    if (d % 4 != 0) throw ShapeError("2D positional encoding needs a width divisible by 4, got " + std::to_string(d));
    const auto rows = positional_encoding<T>(h, d / 2);
    const auto cols = positional_encoding<T>(w, d / 2);
    num::Tensor<T> pe({h * w, d});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int j = 0; j < d / 2; ++j) {
                pe.at(r * w + c, j) = rows.at(r, j);
                pe.at(r * w + c, d / 2 + j) = cols.at(c, j);
            }
    return pe;
}

}  // namespace tctr::transformer
