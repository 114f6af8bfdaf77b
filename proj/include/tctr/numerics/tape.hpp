// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "tctr/core/errors.hpp"
#include "tctr/numerics/params.hpp"
#include "tctr/numerics/tensor.hpp"

namespace tctr::num {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
   public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor<T>& value() const { return tape_->value(id_); }
    const Dims& dims() const { return value().dims(); }
    int dim(std::size_t i) const { return value().dim(i); }
    bool requires_grad() const { return tape_->requires_grad(id_); }

   private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Ordered record of executed ops. Nodes are appended in execution order, so every
/// consumer has a larger id than its inputs and a reverse sweep visits each node once,
/// after all of its consumers.
template <typename T>
class Tape {
   public:
    /// Called with the node's output gradient; accumulates into input gradients.
    using BackwardFn = std::function<void(const Tensor<T>& grad_out, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value) { return append("constant", std::move(value), false, {}); }

    Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
        return append("leaf", std::move(value), requires_grad, {});
    }

    /// Records a parameter once per tape; later calls with the same name return the same node.
    Var<T> param(const ParamStore<T>& store, const std::string& name) {
        if (auto it = params_.find(name); it != params_.end()) return Var<T>(this, it->second);
        const auto& e = store.entry(name);
        Var<T> v = append("param:" + name, e.value, e.trainable, {});
        params_[name] = v.id();
        return v;
    }

    /// Appends the result of an op. The backward rule is kept only if some input needs it.
    Var<T> push(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
        bool rg = false;
        for (const auto& in : inputs) rg = rg || requires_grad(in.id());
        return append(op, std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
    }
    Var<T> push(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
        bool rg = false;
        for (const auto& in : inputs) rg = rg || requires_grad(in.id());
        return append(op, std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
    }

    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient slot of a node, zero-allocated on first use. Null if the node needs no gradient.
    Tensor<T>* grad_slot(std::size_t id) {
        Node& n = nodes_.at(id);
        if (!n.requires_grad) return nullptr;
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.value.dims());
            n.has_grad = true;
        }
        return &n.grad;
    }
    Tensor<T>* grad_slot(const Var<T>& v) { return grad_slot(v.id()); }

    /// Gradient of a node after backward(); zeros if nothing flowed into it.
    Tensor<T> grad(const Var<T>& v) const {
        const Node& n = nodes_.at(v.id());
        return n.has_grad ? n.grad : Tensor<T>(n.value.dims());
    }

    const std::map<std::string, std::size_t>& param_nodes() const { return params_; }

    void backward(const Var<T>& loss) {
        if (loss.value().size() != 1)
            throw ContractError("backward needs a scalar loss, got " + dims_to_string(loss.dims()));
        Tensor<T>* seed = grad_slot(loss.id());
        if (!seed) return;
        (*seed)[0] += T(1);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.has_grad || !n.backward) continue;
            n.backward(n.grad, *this);
            // Intermediate gradients are not needed once propagated.
            n.grad = Tensor<T>();
            n.has_grad = false;
            n.backward = nullptr;
        }
    }

   private:
    struct Node {
        std::string op;
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    Var<T> append(std::string op, Tensor<T> value, bool rg, BackwardFn fn) {
        if (!value.all_finite())
            throw NumericError("non-finite value produced by " + op + " " +
                               dims_to_string(value.dims()));
        nodes_.push_back(Node{std::move(op), std::move(value), Tensor<T>(), rg, false, std::move(fn)});
        return Var<T>(this, nodes_.size() - 1);
    }

    std::deque<Node> nodes_;
    std::map<std::string, std::size_t> params_;
};

/// Runs the reverse sweep and writes d loss / d param into every gradient slot of
/// the store. Parameters the loss does not reach get zero.
template <typename T>
void backward(const Var<T>& loss, Tape<T>& tape, ParamStore<T>& params) {
    if (loss.value().size() != 1)
        throw ContractError("backward needs a scalar loss, got " + dims_to_string(loss.dims()));
    params.zero_grad();
    tape.backward(loss);
    for (const auto& [name, id] : tape.param_nodes()) {
        if (!params.contains(name)) continue;
        Tensor<T> g = tape.grad(Var<T>(&tape, id));
        auto& slot = params.grad(name);
        for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }
}

}  // namespace tctr::num
