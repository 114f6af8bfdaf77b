// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "tctr/head/anchors.hpp"
#include "tctr/numerics/ops.hpp"

namespace tctr::head {

inline constexpr double kMinProb = 1e-6;

/// -(1 - p)^gamma * log(p) with p clamped below at 1e-6.
inline double focal_term(double p_t, double gamma) {
    const double p = std::max(p_t, kMinProb);
    return -std::pow(1.0 - p, gamma) * std::log(p);
}

/// Mean focal term over the given per-anchor probabilities of the true outcome.
inline double focal_loss(const std::vector<double>& p_t, double gamma = 2.0) {
    if (p_t.empty()) return 0.0;
    double s = 0;
    for (double p : p_t) s += focal_term(p, gamma);
    return s / static_cast<double>(p_t.size());
}

inline double smooth_l1(double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

/// Sum over the 7 box terms, averaged over rows (positive anchors).
inline double smooth_l1_loss(const std::vector<Residual>& deltas) {
    if (deltas.empty()) return 0.0;
    double s = 0;
    for (const auto& r : deltas)
        for (float d : r) s += smooth_l1(d);
    return s / static_cast<double>(deltas.size());
}

struct LossWeights {
    double cls = 1.0;
    double loc = 0.25;
    double dir = 0.2;
};

/// (b_cls * L_cls + b_loc * L_loc + b_dir * L_dir) / n, with n clamped to >= 1.
inline double total_loss(double l_cls, double l_loc, double l_dir, int n_pos, const LossWeights& b = {}) {
    return (b.cls * l_cls + b.loc * l_loc + b.dir * l_dir) / std::max(n_pos, 1);
}

/// Summed sigmoid focal loss over logits [n x 1]. targets: 1 / 0, or -1 to skip.
template <typename T>
num::Var<T> sigmoid_focal_sum(const num::Var<T>& logits, const std::vector<int>& targets, double gamma = 2.0) {
    if (logits.dims().size() != 2 || logits.dim(1) != 1 || targets.size() != static_cast<std::size_t>(logits.dim(0)))
        throw ShapeError("sigmoid_focal_sum: logits " + dims_to_string(logits.dims()) + " vs " +
                         std::to_string(targets.size()) + " targets");
    const int n = logits.dim(0);
    std::vector<double> dz(n, 0.0);
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        if (targets[i] < 0) continue;
        const double z = logits.value()[i];
        const double s = targets[i] == 1 ? z : -z;  // p_t = sigmoid(s)
        const double log_p = -(std::max(-s, 0.0) + std::log1p(std::exp(-std::abs(s))));
        const double p = std::exp(log_p);
        if (p < kMinProb) {
            loss += -std::pow(1.0 - kMinProb, gamma) * std::log(kMinProb);
            continue;
        }
        const double q = 1.0 - p;
        loss += -std::pow(q, gamma) * log_p;
        // dL/ds with p = sigmoid(s), q = 1 - p
        const double dlds = gamma * std::pow(q, gamma) * p * log_p - std::pow(q, gamma + 1);
        dz[i] = targets[i] == 1 ? dlds : -dlds;
    }
    return logits.tape().push("sigmoid_focal_sum", num::Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                              [logits, dz = std::move(dz)](const num::Tensor<T>& g, num::Tape<T>& t) {
                                  if (auto* gl = t.grad_slot(logits))
                                      for (std::size_t i = 0; i < dz.size(); ++i)
                                          (*gl)[i] += static_cast<T>(dz[i]) * g[0];
                              });
}

/// Summed smooth-L1 between predictions [n x k] and constant targets of the same shape.
template <typename T>
num::Var<T> smooth_l1_sum(const num::Var<T>& pred, const num::Tensor<T>& target) {
    if (pred.dims() != target.dims())
        throw ShapeError("smooth_l1_sum: " + dims_to_string(pred.dims()) + " vs " + dims_to_string(target.dims()));
    double loss = 0;
    std::vector<T> dd(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(pred.value()[i]) - target[i];
        loss += smooth_l1(d);
        dd[i] = static_cast<T>(std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0));
    }
    return pred.tape().push("smooth_l1_sum", num::Tensor<T>::scalar(static_cast<T>(loss)), {pred},
                            [pred, dd = std::move(dd)](const num::Tensor<T>& g, num::Tape<T>& t) {
                                if (auto* gp = t.grad_slot(pred))
                                    for (std::size_t i = 0; i < dd.size(); ++i) (*gp)[i] += dd[i] * g[0];
                            });
}

}  // namespace tctr::head
