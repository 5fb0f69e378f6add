// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars together with a closure
// that propagates the output gradient back to the inputs. Parameters live in
// a ParameterStore outside the tape; a tape only reads them, and after
// backward() their gradients are collected into a caller-owned Gradients
// buffer. Tapes are single-use and not thread-safe; separate tapes over the
// same const ParameterStore may run concurrently.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcle::ad {

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamId = int;

template <typename Real>
struct Parameter {
    std::string name;
    Matrix<Real> value;
};

// Ordered, named collection of trainable matrices. Order is registration
// order and is what checkpoints and optimizers iterate over.
template <typename Real>
class ParameterStore {
public:
    ParamId add(std::string name, Matrix<Real> value);

    const Parameter<Real>& at(ParamId id) const { return params_.at(static_cast<std::size_t>(id)); }
    Parameter<Real>& at(ParamId id) { return params_.at(static_cast<std::size_t>(id)); }
    ParamId id_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }

    bool all_finite() const;

private:
    std::vector<Parameter<Real>> params_;
    std::unordered_map<std::string, ParamId> index_;
};

// Gradient buffer aligned with a ParameterStore.
template <typename Real>
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParameterStore<Real>& store);

    Matrix<Real>& operator[](ParamId id) { return grads_.at(static_cast<std::size_t>(id)); }
    const Matrix<Real>& operator[](ParamId id) const { return grads_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return grads_.size(); }

    void zero();
    Real global_norm() const;
    void scale(Real factor);
    bool all_finite() const;

private:
    std::vector<Matrix<Real>> grads_;
};

template <typename Real>
class Tape;

// Lightweight handle to a node on a tape. Copying a Var copies the handle,
// not the data.
template <typename Real>
class Var {
public:
    Var() = default;
    Var(Tape<Real>* tape, int id) : tape_(tape), id_(id) {}

    const Matrix<Real>& value() const;
    // Gradient accumulated by the last backward(); empty if none reached it.
    const Matrix<Real>& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Real scalar() const { return value()(0, 0); }

    Tape<Real>* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<Real>* tape_ = nullptr;
    int id_ = -1;
};

template <typename Real>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    // A non-recording tape stores values only; every Var is a constant and
    // backward() is unavailable. Used for decoding and evaluation.
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Real> constant(Matrix<Real> value);
    // Differentiable input whose gradient is readable after backward().
    Var<Real> leaf(Matrix<Real> value);
    // Read-only view of a stored parameter; repeated calls return the same Var.
    Var<Real> param(const ParameterStore<Real>& store, ParamId id);

    void backward(const Var<Real>& scalar_output);
    // Adds every parameter node's gradient into grads[param id].
    void accumulate_param_grads(Gradients<Real>& grads) const;

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    // Op construction. `inputs` decide whether the result needs a gradient;
    // the closure is dropped when none does or when not recording.
    Var<Real> push(Matrix<Real> value, std::initializer_list<Var<Real>> inputs, BackwardFn fn);
    Var<Real> push(Matrix<Real> value, std::span<const Var<Real>> inputs, BackwardFn fn);

    const Matrix<Real>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Matrix<Real>& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Adds `delta` into the gradient of node `id` if that node needs one.
    template <typename Derived>
    void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.requires_grad) {
            return;
        }
        if (node.grad.size() == 0) {
            node.grad = delta;
        } else {
            node.grad += delta;
        }
    }

private:
    struct Node {
        Matrix<Real> value;
        Matrix<Real> grad;
        BackwardFn backward;
        ParamId param = -1;
        bool requires_grad = false;
    };

    bool record_;
    std::deque<Node> nodes_;  // stable addresses: value() references survive later pushes
    std::unordered_map<ParamId, int> param_nodes_;
    const void* param_store_ = nullptr;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Var<float>;
extern template class Var<double>;

} // namespace mcle::ad
