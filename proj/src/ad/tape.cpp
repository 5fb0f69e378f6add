// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/ad/tape.hpp"

#include "mcle/common/error.hpp"

#include <cmath>

namespace mcle::ad {

template <typename Real>
ParamId ParameterStore<Real>::add(std::string name, Matrix<Real> value) {
    if (index_.count(name) != 0) {
        throw InvalidArgument("duplicate parameter name: " + name);
    }
    const auto id = static_cast<ParamId>(params_.size());
    index_.emplace(name, id);
    params_.push_back(Parameter<Real>{std::move(name), std::move(value)});
    return id;
}

template <typename Real>
ParamId ParameterStore<Real>::id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw InvalidArgument("unknown parameter: " + name);
    }
    return it->second;
}

template <typename Real>
std::size_t ParameterStore<Real>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

template <typename Real>
bool ParameterStore<Real>::all_finite() const {
    for (const auto& p : params_) {
        if (!p.value.allFinite()) {
            return false;
        }
    }
    return true;
}

template <typename Real>
Gradients<Real>::Gradients(const ParameterStore<Real>& store) {
    grads_.reserve(store.size());
    for (const auto& p : store) {
        grads_.push_back(Matrix<Real>::Zero(p.value.rows(), p.value.cols()));
    }
}

template <typename Real>
void Gradients<Real>::zero() {
    for (auto& g : grads_) {
        g.setZero();
    }
}

template <typename Real>
Real Gradients<Real>::global_norm() const {
    // accumulate in double so f32 runs do not lose small contributions
    double sq = 0.0;
    for (const auto& g : grads_) {
        sq += static_cast<double>(g.squaredNorm());
    }
    return static_cast<Real>(std::sqrt(sq));
}

template <typename Real>
void Gradients<Real>::scale(Real factor) {
    for (auto& g : grads_) {
        g *= factor;
    }
}

template <typename Real>
bool Gradients<Real>::all_finite() const {
    for (const auto& g : grads_) {
        if (!g.allFinite()) {
            return false;
        }
    }
    return true;
}

template <typename Real>
const Matrix<Real>& Var<Real>::value() const {
    return tape_->value(id_);
}

template <typename Real>
const Matrix<Real>& Var<Real>::grad() const {
    return tape_->grad(id_);
}

template <typename Real>
Var<Real> Tape<Real>::constant(Matrix<Real> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, -1, false});
    return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Real>
Var<Real> Tape<Real>::leaf(Matrix<Real> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, -1, record_});
    return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Real>
Var<Real> Tape<Real>::param(const ParameterStore<Real>& store, ParamId id) {
    if (param_store_ == nullptr) {
        param_store_ = &store;
    } else if (param_store_ != &store) {
        throw InvalidArgument("a tape may only read parameters from one store");
    }
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) {
        return Var<Real>(this, it->second);
    }
    nodes_.push_back(Node{store.at(id).value, {}, {}, id, record_});
    const int node_id = static_cast<int>(nodes_.size() - 1);
    param_nodes_.emplace(id, node_id);
    return Var<Real>(this, node_id);
}

template <typename Real>
Var<Real> Tape<Real>::push(Matrix<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var<Real>>(inputs.begin(), inputs.size()), std::move(fn));
}

template <typename Real>
Var<Real> Tape<Real>::push(Matrix<Real> value, std::span<const Var<Real>> inputs, BackwardFn fn) {
    bool needs = false;
    if (record_) {
        for (const auto& in : inputs) {
            if (in.tape() != this) {
                throw InvalidArgument("operation mixes Vars from different tapes");
            }
            needs = needs || requires_grad(in.id());
        }
    }
    Node node{std::move(value), {}, {}, -1, needs};
    if (needs) {
        node.backward = std::move(fn);
    }
    nodes_.push_back(std::move(node));
    return Var<Real>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Real>
void Tape<Real>::backward(const Var<Real>& scalar_output) {
    if (!record_) {
        throw InvalidArgument("backward() on a non-recording tape");
    }
    const auto& out = nodes_.at(static_cast<std::size_t>(scalar_output.id()));
    if (out.value.rows() != 1 || out.value.cols() != 1) {
        throw InvalidArgument("backward() needs a 1x1 output");
    }
    if (!out.requires_grad) {
        return;
    }
    accumulate(scalar_output.id(), Matrix<Real>::Ones(1, 1));
    for (int id = scalar_output.id(); id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.requires_grad || node.grad.size() == 0 || !node.backward) {
            continue;
        }
        node.backward(*this, id);
    }
}

template <typename Real>
void Tape<Real>::accumulate_param_grads(Gradients<Real>& grads) const {
    for (const auto& [param, node_id] : param_nodes_) {
        const auto& g = nodes_[static_cast<std::size_t>(node_id)].grad;
        if (g.size() != 0) {
            grads[param] += g;
        }
    }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template class Var<float>;
template class Var<double>;

} // namespace mcle::ad
