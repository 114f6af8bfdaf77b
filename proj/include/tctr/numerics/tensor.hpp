// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tctr/core/errors.hpp"

namespace tctr::num {

using Dims = std::vector<int>;

inline std::size_t element_count(const Dims& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

inline void check_dims(const Dims& dims) {
    if (dims.empty()) throw ShapeError("tensor needs at least one dimension");
    for (int d : dims)
        if (d <= 0) throw ShapeError("non-positive extent in " + dims_to_string(dims));
}

/// Dense row-major array with explicit extents. Value semantics.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() : dims_{1}, data_(1, T(0)) {}

    explicit Tensor(Dims dims, T fill = T(0)) : dims_(std::move(dims)) {
        check_dims(dims_);
        data_.assign(element_count(dims_), fill);
    }

    Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_dims(dims_);
        if (data_.size() != element_count(dims_))
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " +
                             dims_to_string(dims_));
    }

    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    const Dims& dims() const { return dims_; }
    int dim(std::size_t i) const { return dims_.at(i); }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dims_[1] + j]; }
    const T& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dims_[1] + j]; }
    T& at(int c, int h, int w) {
        return data_[(static_cast<std::size_t>(c) * dims_[1] + h) * dims_[2] + w];
    }
    const T& at(int c, int h, int w) const {
        return data_[(static_cast<std::size_t>(c) * dims_[1] + h) * dims_[2] + w];
    }

    T item() const {
        if (data_.size() != 1) throw ShapeError("item() on " + dims_to_string(dims_));
        return data_[0];
    }

    Tensor reshaped(Dims dims) const {
        if (element_count(dims) != data_.size())
            throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " +
                             dims_to_string(dims));
        return Tensor(std::move(dims), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(dims_, std::move(out));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor& o) const { return dims_ == o.dims_ && data_ == o.data_; }

   private:
    Dims dims_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> identity(int n) {
    Tensor<T> t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.dims() != b.dims())
        throw ShapeError("compare " + dims_to_string(a.dims()) + " vs " + dims_to_string(b.dims()));
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace tctr::num
