// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace tctr::num::kernel {

// Row-major kernels with a fixed summation order so results are bit-reproducible.

/// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c) {
    constexpr int kTile = 512;
    for (int j0 = 0; j0 < n; j0 += kTile) {
        const int j1 = std::min(n, j0 + kTile);
        for (int i = 0; i < m; ++i) {
            T* crow = c + static_cast<std::size_t>(i) * n;
            const T* arow = a + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + static_cast<std::size_t>(p) * n;
                for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

/// out[n x m] = in[m x n]^T
template <typename T>
void transpose(int m, int n, const T* in, T* out) {
    constexpr int kB = 32;
    for (int i0 = 0; i0 < m; i0 += kB)
        for (int j0 = 0; j0 < n; j0 += kB)
            for (int i = i0; i < std::min(m, i0 + kB); ++i)
                for (int j = j0; j < std::min(n, j0 + kB); ++j)
                    out[static_cast<std::size_t>(j) * m + i] = in[static_cast<std::size_t>(i) * n + j];
}

/// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c) {
    std::vector<T> bt(static_cast<std::size_t>(k) * n);
    transpose(n, k, b, bt.data());
    gemm_nn(m, n, k, a, bt.data(), c);
}

/// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
    std::vector<T> at(static_cast<std::size_t>(k) * m);
    transpose(k, m, a, at.data());
    gemm_nn(m, n, k, at.data(), b, c);
}

}  // namespace tctr::num::kernel
