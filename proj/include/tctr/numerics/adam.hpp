// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "tctr/numerics/params.hpp"

namespace tctr::num {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over every trainable entry of a ParamStore, reading its gradient slots.
template <typename T>
class Adam {
   public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore<T>& params, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, e] : params.entries()) {
            if (!e.trainable) continue;
            auto& st = state_[name];
            if (st.m.size() != e.value.size()) {
                st.m.assign(e.value.size(), 0.0);
                st.v.assign(e.value.size(), 0.0);
            }
            for (std::size_t i = 0; i < e.value.size(); ++i) {
                const double g = e.grad[i];
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = st.m[i] / c1;
                const double vhat = st.v[i] / c2;
                e.value[i] = static_cast<T>(e.value[i] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    long steps() const { return t_; }

   private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    long t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace tctr::num
