// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tctr/core/errors.hpp"
#include "tctr/core/rng.hpp"
#include "tctr/numerics/tensor.hpp"

namespace tctr::num {

enum class Init {
    zeros,
    ones,
    linear,   // truncated normal, std 0.02
    kaiming,  // normal scaled by sqrt(2 / fan_in), fan_in = product of dims after the first
};

/// Named parameters with matching gradient slots. Iteration is sorted by name.
///
/// Every entry is initialized from its own stream derived from (seed, name), so the
/// initial value of a parameter does not depend on which other parameters exist.
template <typename T>
class ParamStore {
   public:
    struct Entry {
        Tensor<T> value;
        Tensor<T> grad;
        bool trainable = true;
    };

    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    void declare(const std::string& name, const Dims& dims, Init init, bool trainable = true) {
        if (auto it = entries_.find(name); it != entries_.end()) {
            if (it->second.value.dims() != dims)
                throw ShapeError("parameter " + name + " redeclared as " + dims_to_string(dims) +
                                 ", was " + dims_to_string(it->second.value.dims()));
            return;
        }
        Entry e{Tensor<T>(dims), Tensor<T>(dims), trainable};
        Rng rng(mix_seed(seed_, fnv1a64(name)));
        switch (init) {
            case Init::zeros:
                break;
            case Init::ones:
                e.value.fill(T(1));
                break;
            case Init::linear:
                for (auto& v : e.value.data()) v = static_cast<T>(0.02 * rng.truncated_normal());
                break;
            case Init::kaiming: {
                std::size_t fan_in = 1;
                for (std::size_t i = 1; i < dims.size(); ++i) fan_in *= dims[i];
                const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
                for (auto& v : e.value.data()) v = static_cast<T>(std * rng.truncated_normal());
                break;
            }
        }
        entries_.emplace(name, std::move(e));
    }

    /// Adds or replaces a non-trainable buffer with explicit contents.
    void set_buffer(const std::string& name, Tensor<T> value) {
        Tensor<T> g(value.dims());
        entries_[name] = Entry{std::move(value), std::move(g), false};
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter " + name);
        return it->second;
    }

    Tensor<T>& value(const std::string& name) { return entry(name).value; }
    const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
    Tensor<T>& grad(const std::string& name) { return entry(name).grad; }
    const Tensor<T>& grad(const std::string& name) const { return entry(name).grad; }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : entries_) out.push_back(k);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, e] : entries_)
            if (e.trainable) n += e.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, e] : entries_) e.grad.fill(T(0));
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out(seed_);
        for (const auto& [k, e] : entries_) {
            out.entries()[k] = typename ParamStore<U>::Entry{e.value.template cast<U>(),
                                                             e.grad.template cast<U>(), e.trainable};
        }
        return out;
    }

    bool operator==(const ParamStore& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (const auto& [k, e] : entries_) {
            auto it = o.entries_.find(k);
            if (it == o.entries_.end() || !(it->second.value == e.value)) return false;
        }
        return true;
    }

   private:
    std::uint64_t seed_;
    std::map<std::string, Entry> entries_;
};

}  // namespace tctr::num
