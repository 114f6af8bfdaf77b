// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "tctr/core/errors.hpp"
#include "tctr/numerics/gemm.hpp"
#include "tctr/numerics/tape.hpp"
#include "tctr/numerics/tensor.hpp"

namespace tctr::num {

namespace detail {

inline void require(bool ok, const std::string& op, const Dims& a, const Dims& b) {
    if (!ok) throw ShapeError(op + ": incompatible shapes " + dims_to_string(a) + " and " + dims_to_string(b));
}

inline void require_rank(const std::string& op, const Dims& d, std::size_t rank) {
    if (d.size() != rank)
        throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got " + dims_to_string(d));
}

template <typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
    if (!dst) return;
    for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                T* dst = cols + (static_cast<std::size_t>(ci) * k * k + ki * k + kj) * plane;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    T* drow = dst + static_cast<std::size_t>(oh) * wo;
                    if (ih < 0 || ih >= h) {
                        std::fill(drow, drow + wo, T(0));
                        continue;
                    }
                    const T* srow = x + (static_cast<std::size_t>(ci) * h + ih) * w;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        drow[ow] = (iw < 0 || iw >= w) ? T(0) : srow[iw];
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const T* src = cols + (static_cast<std::size_t>(ci) * k * k + ki * k + kj) * plane;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) continue;
                    T* xrow = x + (static_cast<std::size_t>(ci) * h + ih) * w;
                    const T* srow = src + static_cast<std::size_t>(oh) * wo;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < w) xrow[iw] += srow[ow];
                    }
                }
            }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const Dims& da = a.dims();
    const Dims& db = b.dims();
    detail::require(da.size() == 2 && db.size() == 2 && da[1] == db[0], "matmul", da, db);
    const int m = da[0], k = da[1], n = db[1];
    Tensor<T> out({m, n});
    kernel::gemm_nn(m, n, k, a.value().ptr(), b.value().ptr(), out.ptr());
    return a.tape().push("matmul", std::move(out), {a, b}, [a, b, m, n, k](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a)) kernel::gemm_nt(m, k, n, g.ptr(), b.value().ptr(), ga->ptr());
        if (auto* gb = t.grad_slot(b)) kernel::gemm_tn(k, n, m, a.value().ptr(), g.ptr(), gb->ptr());
    });
}

/// Same product as matmul, but every dot product is summed in sorted order of its terms,
/// so permuting the shared dimension (rows of B with columns of A) is bit-exact.
template <typename T>
Var<T> matmul_sorted(const Var<T>& a, const Var<T>& b) {
    const Dims& da = a.dims();
    const Dims& db = b.dims();
    detail::require(da.size() == 2 && db.size() == 2 && da[1] == db[0], "matmul_sorted", da, db);
    const int m = da[0], k = da[1], n = db[1];
    Tensor<T> out({m, n});
    std::vector<T> terms(k);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            for (int p = 0; p < k; ++p) terms[p] = av.at(i, p) * bv.at(p, j);
            std::sort(terms.begin(), terms.end());
            T acc = 0;
            for (T v : terms) acc += v;
            out.at(i, j) = acc;
        }
    return a.tape().push("matmul_sorted", std::move(out), {a, b}, [a, b, m, n, k](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a)) kernel::gemm_nt(m, k, n, g.ptr(), b.value().ptr(), ga->ptr());
        if (auto* gb = t.grad_slot(b)) kernel::gemm_tn(k, n, m, a.value().ptr(), g.ptr(), gb->ptr());
    });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    detail::require_rank("transpose", a.dims(), 2);
    const int m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    kernel::transpose(m, n, a.value().ptr(), out.ptr());
    return a.tape().push("transpose", std::move(out), {a}, [a, m, n](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a)) {
            std::vector<T> tmp(g.size());
            kernel::transpose(n, m, g.ptr(), tmp.data());
            for (std::size_t i = 0; i < tmp.size(); ++i) (*ga)[i] += tmp[i];
        }
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Dims dims) {
    Tensor<T> out = a.value().reshaped(std::move(dims));
    return a.tape().push("reshape", std::move(out), {a}, [a](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::require(a.dims() == b.dims(), "add", a.dims(), b.dims());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return a.tape().push("add", std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& t) {
        detail::accumulate(t.grad_slot(a), g);
        detail::accumulate(t.grad_slot(b), g);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::require(a.dims() == b.dims(), "sub", a.dims(), b.dims());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return a.tape().push("sub", std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& t) {
        detail::accumulate(t.grad_slot(a), g);
        if (auto* gb = t.grad_slot(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::require(a.dims() == b.dims(), "mul", a.dims(), b.dims());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.tape().push("mul", std::move(out), {a, b}, [a, b](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
        if (auto* gb = t.grad_slot(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v *= s;
    return a.tape().push("scale", std::move(out), {a}, [a, s](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * s;
    });
}

/// X[m x n] + b[n] broadcast over rows.
template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& b) {
    detail::require(x.dims().size() == 2 && b.value().size() == static_cast<std::size_t>(x.dim(1)),
                    "add_row_bias", x.dims(), b.dims());
    const int m = x.dim(0), n = x.dim(1);
    Tensor<T> out = x.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += b.value()[j];
    return x.tape().push("add_row_bias", std::move(out), {x, b}, [x, b, m, n](const Tensor<T>& g, Tape<T>& t) {
        detail::accumulate(t.grad_slot(x), g);
        if (auto* gb = t.grad_slot(b))
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) (*gb)[j] += g.at(i, j);
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    return a.tape().push("relu", std::move(out), {a}, [a](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a.value()[i] > T(0)) (*ga)[i] += g[i];
    });
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v = sigmoid_scalar(v);
    const std::size_t id = a.tape().size();
    return a.tape().push("sigmoid", std::move(out), {a}, [a, id](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a)) {
            const Tensor<T>& y = t.value(id);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (T(1) - y[i]);
        }
    });
}

template <typename T>
Var<T> square(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v = v * v;
    return a.tape().push("square", std::move(out), {a}, [a](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += T(2) * a.value()[i] * g[i];
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    double s = 0;
    for (T v : a.value().data()) s += v;
    return a.tape().push("sum", Tensor<T>::scalar(static_cast<T>(s)), {a}, [a](const Tensor<T>& g, Tape<T>& t) {
        if (auto* ga = t.grad_slot(a))
            for (auto& v : ga->data()) v += g[0];
    });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

/// Row softmax computed after subtracting each row's max. The normalizer is summed in
/// sorted order, so permuting a row's entries permutes the output bit-exactly.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    detail::require_rank("softmax_rows", x.dims(), 2);
    const int m = x.dim(0), n = x.dim(1);
    Tensor<T> out({m, n});
    std::vector<T> buf(n);
    for (int i = 0; i < m; ++i) {
        T mx = x.value().at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.value().at(i, j));
        for (int j = 0; j < n; ++j) buf[j] = out.at(i, j) = std::exp(x.value().at(i, j) - mx);
        std::sort(buf.begin(), buf.end());
        T s = 0;
        for (T v : buf) s += v;
        for (int j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    const std::size_t id = x.tape().size();
    return x.tape().push("softmax_rows", std::move(out), {x}, [x, id, m, n](const Tensor<T>& g, Tape<T>& t) {
        auto* gx = t.grad_slot(x);
        if (!gx) return;
        const Tensor<T>& y = t.value(id);
        for (int i = 0; i < m; ++i) {
            T dot = 0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) gx->at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

/// Per-row standardization (variance epsilon 1e-5) followed by gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
    detail::require_rank("layer_norm", x.dims(), 2);
    const int m = x.dim(0), d = x.dim(1);
    if (d < 2) throw ShapeError("layer_norm: row width must be >= 2, got " + dims_to_string(x.dims()));
    detail::require(gain.value().size() == static_cast<std::size_t>(d) &&
                        bias.value().size() == static_cast<std::size_t>(d),
                    "layer_norm", x.dims(), gain.dims());
    Tensor<T> xhat({m, d});
    std::vector<T> inv_std(m);
    Tensor<T> out({m, d});
    for (int i = 0; i < m; ++i) {
        double mu = 0;
        for (int j = 0; j < d; ++j) mu += x.value().at(i, j);
        mu /= d;
        double var = 0;
        for (int j = 0; j < d; ++j) {
            const double c = x.value().at(i, j) - mu;
            var += c * c;
        }
        var /= d;
        const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std[i] = is;
        for (int j = 0; j < d; ++j) {
            xhat.at(i, j) = static_cast<T>(x.value().at(i, j) - mu) * is;
            out.at(i, j) = xhat.at(i, j) * gain.value()[j] + bias.value()[j];
        }
    }
    return x.tape().push(
        "layer_norm", std::move(out), {x, gain, bias},
        [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), m, d](const Tensor<T>& g, Tape<T>& t) {
            if (auto* gg = t.grad_slot(gain))
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < d; ++j) (*gg)[j] += g.at(i, j) * xhat.at(i, j);
            if (auto* gb = t.grad_slot(bias))
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < d; ++j) (*gb)[j] += g.at(i, j);
            if (auto* gx = t.grad_slot(x)) {
                std::vector<T> dxhat(d);
                for (int i = 0; i < m; ++i) {
                    T mean_d = 0, mean_dx = 0;
                    for (int j = 0; j < d; ++j) {
                        dxhat[j] = g.at(i, j) * gain.value()[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat.at(i, j);
                    }
                    mean_d /= d;
                    mean_dx /= d;
                    for (int j = 0; j < d; ++j)
                        gx->at(i, j) += inv_std[i] * (dxhat[j] - mean_d - xhat.at(i, j) * mean_dx);
                }
            }
        });
}

/// Sum over rows of -log softmax(row)[label]. Gradient per row is p - onehot(label).
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    detail::require_rank("softmax_cross_entropy", logits.dims(), 2);
    const int m = logits.dim(0), n = logits.dim(1);
    if (labels.size() != static_cast<std::size_t>(m))
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         dims_to_string(logits.dims()));
    Tensor<T> prob({m, n});
    double loss = 0;
    for (int i = 0; i < m; ++i) {
        if (labels[i] < 0 || labels[i] >= n) throw ContractError("softmax_cross_entropy: label out of range");
        T mx = logits.value().at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, logits.value().at(i, j));
        T s = 0;
        for (int j = 0; j < n; ++j) s += std::exp(logits.value().at(i, j) - mx);
        for (int j = 0; j < n; ++j) prob.at(i, j) = std::exp(logits.value().at(i, j) - mx) / s;
        loss -= static_cast<double>(logits.value().at(i, labels[i]) - mx - std::log(s));
    }
    return logits.tape().push("softmax_cross_entropy", Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                              [logits, labels, prob = std::move(prob), m, n](const Tensor<T>& g, Tape<T>& t) {
                                  if (auto* gl = t.grad_slot(logits))
                                      for (int i = 0; i < m; ++i)
                                          for (int j = 0; j < n; ++j)
                                              gl->at(i, j) += g[0] * (prob.at(i, j) - (j == labels[i] ? T(1) : T(0)));
                              });
}

// ---------------------------------------------------------------------------
// Slicing and concatenation

/// Columns [start, start + width) of a matrix.
template <typename T>
Var<T> col_slice(const Var<T>& x, int start, int width) {
    detail::require_rank("col_slice", x.dims(), 2);
    const int m = x.dim(0), n = x.dim(1);
    if (start < 0 || width <= 0 || start + width > n)
        throw ShapeError("col_slice: columns [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         ") out of " + dims_to_string(x.dims()));
    Tensor<T> out({m, width});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < width; ++j) out.at(i, j) = x.value().at(i, start + j);
    return x.tape().push("col_slice", std::move(out), {x}, [x, start, width, m](const Tensor<T>& g, Tape<T>& t) {
        if (auto* gx = t.grad_slot(x))
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < width; ++j) gx->at(i, start + j) += g.at(i, j);
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: no inputs");
    const int m = xs[0].dim(0);
    int n = 0;
    for (const auto& x : xs) {
        detail::require(x.dims().size() == 2 && x.dim(0) == m, "concat_cols", xs[0].dims(), x.dims());
        n += x.dim(1);
    }
    Tensor<T> out({m, n});
    int off = 0;
    for (const auto& x : xs) {
        const int w = x.dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = x.value().at(i, j);
        off += w;
    }
    return xs[0].tape().push("concat_cols", std::move(out), xs, [xs, m](const Tensor<T>& g, Tape<T>& t) {
        int off = 0;
        for (const auto& x : xs) {
            const int w = x.dim(1);
            if (auto* gx = t.grad_slot(x))
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j) gx->at(i, j) += g.at(i, off + j);
            off += w;
        }
    });
}

/// Concatenation along the leading dimension; trailing extents must agree.
template <typename T>
Var<T> concat0(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat0: no inputs");
    Dims tail(xs[0].dims().begin() + 1, xs[0].dims().end());
    int lead = 0;
    for (const auto& x : xs) {
        Dims t(x.dims().begin() + 1, x.dims().end());
        detail::require(t == tail, "concat0", xs[0].dims(), x.dims());
        lead += x.dim(0);
    }
    Dims dims = xs[0].dims();
    dims[0] = lead;
    Tensor<T> out(dims);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x.value().data().begin(), x.value().data().end(), out.ptr() + off);
        off += x.value().size();
    }
    return xs[0].tape().push("concat0", std::move(out), xs, [xs](const Tensor<T>& g, Tape<T>& t) {
        std::size_t off = 0;
        for (const auto& x : xs) {
            const std::size_t n = x.value().size();
            if (auto* gx = t.grad_slot(x))
                for (std::size_t i = 0; i < n; ++i) (*gx)[i] += g[off + i];
            off += n;
        }
    });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<int>& rows) {
    detail::require_rank("gather_rows", x.dims(), 2);
    const int m = x.dim(0), n = x.dim(1);
    if (rows.empty()) throw ShapeError("gather_rows: empty index list");
    Tensor<T> out({static_cast<int>(rows.size()), n});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= m) throw ShapeError("gather_rows: row index out of range");
        for (int j = 0; j < n; ++j) out.at(static_cast<int>(r), j) = x.value().at(rows[r], j);
    }
    return x.tape().push("gather_rows", std::move(out), {x}, [x, rows, n](const Tensor<T>& g, Tape<T>& t) {
        if (auto* gx = t.grad_slot(x))
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (int j = 0; j < n; ++j) gx->at(rows[r], j) += g.at(static_cast<int>(r), j);
    });
}

// ---------------------------------------------------------------------------
// Spatial ops on C x H x W maps

inline int conv_out_extent(int in, int k, int stride, int pad) {
    const int span = in + 2 * pad - k;
    if (span < 0 || span % stride != 0)
        throw ShapeError("conv2d: (" + std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                         std::to_string(k) + ") not divisible by stride " + std::to_string(stride));
    return span / stride + 1;
}

/// Cross-correlation of X[Cin x H x W] with W[Cout x Cin x k x k], optional bias[Cout].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::type_identity_t<const Var<T>*> bias, int stride = 1,
              int pad = 0) {
    detail::require_rank("conv2d", x.dims(), 3);
    detail::require_rank("conv2d", w.dims(), 4);
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    detail::require(w.dim(1) == cin && w.dim(3) == k, "conv2d", x.dims(), w.dims());
    if (k % 2 == 0) throw ShapeError("conv2d: kernel extent must be odd, got " + dims_to_string(w.dims()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (bias) detail::require(bias->value().size() == static_cast<std::size_t>(cout), "conv2d bias", w.dims(), bias->dims());
    const int ho = conv_out_extent(h, k, stride, pad);
    const int wo = conv_out_extent(wd, k, stride, pad);
    const int ckk = cin * k * k;
    const int hw = ho * wo;
    const bool direct = (k == 1 && stride == 1 && pad == 0);

    Tensor<T> out({cout, ho, wo});
    if (bias)
        for (int o = 0; o < cout; ++o) std::fill(out.ptr() + static_cast<std::size_t>(o) * hw,
                                                 out.ptr() + static_cast<std::size_t>(o + 1) * hw, bias->value()[o]);
    if (direct) {
        kernel::gemm_nn(cout, hw, ckk, w.value().ptr(), x.value().ptr(), out.ptr());
    } else {
        std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
        detail::im2col(x.value().ptr(), cin, h, wd, k, stride, pad, ho, wo, cols.data());
        kernel::gemm_nn(cout, hw, ckk, w.value().ptr(), cols.data(), out.ptr());
    }

    std::vector<Var<T>> inputs{x, w};
    if (bias) inputs.push_back(*bias);
    const Var<T> b = bias ? *bias : Var<T>();
    return x.tape().push("conv2d", std::move(out), inputs,
                         [=](const Tensor<T>& g, Tape<T>& t) {
                             std::vector<T> cols;
                             const T* colp = x.value().ptr();
                             auto* gw = t.grad_slot(w);
                             if (gw) {
                                 if (!direct) {
                                     cols.resize(static_cast<std::size_t>(ckk) * hw);
                                     detail::im2col(x.value().ptr(), cin, h, wd, k, stride, pad, ho, wo, cols.data());
                                     colp = cols.data();
                                 }
                                 kernel::gemm_nt(cout, ckk, hw, g.ptr(), colp, gw->ptr());
                             }
                             if (b.valid())
                                 if (auto* gb = t.grad_slot(b))
                                     for (int o = 0; o < cout; ++o) {
                                         T s = 0;
                                         for (int i = 0; i < hw; ++i) s += g[static_cast<std::size_t>(o) * hw + i];
                                         (*gb)[o] += s;
                                     }
                             if (auto* gx = t.grad_slot(x)) {
                                 if (direct) {
                                     kernel::gemm_tn(ckk, hw, cout, w.value().ptr(), g.ptr(), gx->ptr());
                                 } else {
                                     std::vector<T> dcols(static_cast<std::size_t>(ckk) * hw, T(0));
                                     kernel::gemm_tn(ckk, hw, cout, w.value().ptr(), g.ptr(), dcols.data());
                                     detail::col2im(dcols.data(), cin, h, wd, k, stride, pad, ho, wo, gx->ptr());
                                 }
                             }
                         });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride = 1, int pad = 0) {
    return conv2d(x, w, &bias, stride, pad);
}

/// Windowed max over k x k blocks; ties resolve to the first index in row-major order.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k = 2, int stride = 2) {
    detail::require_rank("maxpool2d", x.dims(), 3);
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % stride != 0 || w % stride != 0 || k != stride)
        throw ShapeError("maxpool2d: extents " + dims_to_string(x.dims()) + " not divisible by stride " +
                         std::to_string(stride));
    const int ho = h / stride, wo = w / stride;
    Tensor<T> out({c, ho, wo});
    std::vector<std::size_t> arg(out.size());
    for (int ci = 0; ci < c; ++ci)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
                std::size_t best = (static_cast<std::size_t>(ci) * h + oh * stride) * w + ow * stride;
                T bv = x.value()[best];
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const std::size_t idx = (static_cast<std::size_t>(ci) * h + oh * stride + i) * w + ow * stride + j;
                        if (x.value()[idx] > bv) {
                            bv = x.value()[idx];
                            best = idx;
                        }
                    }
                const std::size_t o = (static_cast<std::size_t>(ci) * ho + oh) * wo + ow;
                out[o] = bv;
                arg[o] = best;
            }
    return x.tape().push("maxpool2d", std::move(out), {x}, [x, arg = std::move(arg)](const Tensor<T>& g, Tape<T>& t) {
        if (auto* gx = t.grad_slot(x))
            for (std::size_t o = 0; o < arg.size(); ++o) (*gx)[arg[o]] += g[o];
    });
}

/// Nearest-neighbour 2x up-sampling: each pixel becomes a 2 x 2 block.
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
    detail::require_rank("upsample2x", x.dims(), 3);
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < 2 * h; ++i)
            for (int j = 0; j < 2 * w; ++j) out.at(ci, i, j) = x.value().at(ci, i / 2, j / 2);
    return x.tape().push("upsample2x", std::move(out), {x}, [x, c, h, w](const Tensor<T>& g, Tape<T>& t) {
        if (auto* gx = t.grad_slot(x))
            for (int ci = 0; ci < c; ++ci)
                for (int i = 0; i < 2 * h; ++i)
                    for (int j = 0; j < 2 * w; ++j) gx->at(ci, i / 2, j / 2) += g.at(ci, i, j);
    });
}

/// Segment max over point rows followed by a scatter into a C x H x W grid.
///
/// `offsets` has one more entry than `cells`; segment s spans rows [offsets[s], offsets[s+1])
/// and lands at flat cell index cells[s] (row * W + col). Cells without a segment are zero.
template <typename T>
Var<T> segment_max_scatter(const Var<T>& feats, const std::vector<int>& offsets, const std::vector<int>& cells,
                           int h, int w) {
    detail::require_rank("segment_max_scatter", feats.dims(), 2);
    const int c = feats.dim(1);
    if (offsets.size() != cells.size() + 1 || offsets.back() > feats.dim(0))
        throw ShapeError("segment_max_scatter: segment table does not match " + dims_to_string(feats.dims()));
    Tensor<T> out({c, h, w});
    std::vector<int> arg(static_cast<std::size_t>(c) * cells.size(), -1);
    for (std::size_t s = 0; s < cells.size(); ++s) {
        if (offsets[s + 1] <= offsets[s]) continue;
        if (cells[s] < 0 || cells[s] >= h * w) throw ShapeError("segment_max_scatter: cell out of range");
        for (int ch = 0; ch < c; ++ch) {
            int best = offsets[s];
            T bv = feats.value().at(best, ch);
            for (int r = offsets[s] + 1; r < offsets[s + 1]; ++r)
                if (feats.value().at(r, ch) > bv) {
                    bv = feats.value().at(r, ch);
                    best = r;
                }
            out[static_cast<std::size_t>(ch) * h * w + cells[s]] = bv;
            arg[s * c + ch] = best;
        }
    }
    return feats.tape().push("segment_max_scatter", std::move(out), {feats},
                             [feats, cells, arg = std::move(arg), c, h, w](const Tensor<T>& g, Tape<T>& t) {
                                 auto* gf = t.grad_slot(feats);
                                 if (!gf) return;
                                 for (std::size_t s = 0; s < cells.size(); ++s)
                                     for (int ch = 0; ch < c; ++ch) {
                                         const int r = arg[s * c + ch];
                                         if (r >= 0) gf->at(r, ch) += g[static_cast<std::size_t>(ch) * h * w + cells[s]];
                                     }
                             });
}

/// Reorders a head output X[(A*k) x H x W] into per-anchor rows [(H*W*A) x k],
/// row = (h*W + w)*A + a, column j = channel a*k + j.
template <typename T>
Var<T> anchor_view(const Var<T>& x, int anchors, int k) {
    detail::require_rank("anchor_view", x.dims(), 3);
    if (x.dim(0) != anchors * k)
        throw ShapeError("anchor_view: " + dims_to_string(x.dims()) + " does not hold " + std::to_string(anchors) +
                         " anchors x " + std::to_string(k));
    const int h = x.dim(1), w = x.dim(2), hw = h * w;
    Tensor<T> out({hw * anchors, k});
    for (int a = 0; a < anchors; ++a)
        for (int j = 0; j < k; ++j)
            for (int l = 0; l < hw; ++l)
                out.at(l * anchors + a, j) = x.value()[static_cast<std::size_t>(a * k + j) * hw + l];
    return x.tape().push("anchor_view", std::move(out), {x}, [x, anchors, k, hw](const Tensor<T>& g, Tape<T>& t) {
        if (auto* gx = t.grad_slot(x))
            for (int a = 0; a < anchors; ++a)
                for (int j = 0; j < k; ++j)
                    for (int l = 0; l < hw; ++l)
                        (*gx)[static_cast<std::size_t>(a * k + j) * hw + l] += g.at(l * anchors + a, j);
    });
}

}  // namespace tctr::num
