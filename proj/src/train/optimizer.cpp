// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/train/optimizer.hpp"

#include "mcle/common/error.hpp"

#include <cmath>

namespace mcle::train {

template <typename Real>
AdamW<Real>::AdamW(const ad::ParameterStore<Real>& params, AdamWConfig config) : config_(config) {
    if (!(config_.lr > 0) || config_.beta1 < 0 || config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1 ||
        !(config_.eps > 0) || config_.weight_decay < 0) {
        throw ConfigError("invalid AdamW hyperparameters");
    }
    for (const auto& p : params) {
        m_.add(p.name, ad::Matrix<Real>::Zero(p.value.rows(), p.value.cols()));
        v_.add(p.name, ad::Matrix<Real>::Zero(p.value.rows(), p.value.cols()));
    }
}

template <typename Real>
void AdamW<Real>::step(ad::ParameterStore<Real>& params, const ad::Gradients<Real>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw InvalidArgument("AdamW: parameter count changed since construction");
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Real>(config_.beta1);
    const auto b2 = static_cast<Real>(config_.beta2);
    const auto step_size = static_cast<Real>(config_.lr / bc1);
    const auto inv_bc2 = static_cast<Real>(1.0 / bc2);
    const auto eps = static_cast<Real>(config_.eps);
    const auto decay = static_cast<Real>(config_.lr * config_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto id = static_cast<ad::ParamId>(i);
        auto& w = params.at(id).value;
        const auto& g = grads[id];
        auto& m = m_.at(id).value;
        auto& v = v_.at(id).value;
        m = b1 * m + (Real(1) - b1) * g;
        v = b2 * v + (Real(1) - b2) * g.cwiseProduct(g);
        if (w.rows() > 1 && decay > 0) {
            w -= decay * w;
        }
        w.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
    }
}

template <typename Real>
void AdamW<Real>::restore(ad::ParameterStore<Real> m, ad::ParameterStore<Real> v, std::int64_t steps) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw ConfigError("AdamW: restored moments do not match the parameter set");
    }
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const auto id = static_cast<ad::ParamId>(i);
        if (m.at(id).name != m_.at(id).name || m.at(id).value.rows() != m_.at(id).value.rows() ||
            m.at(id).value.cols() != m_.at(id).value.cols()) {
            throw ConfigError("AdamW: restored moment " + m.at(id).name + " does not match " + m_.at(id).name);
        }
    }
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = steps;
}

template <typename Real>
double clip_grad_norm(ad::Gradients<Real>& grads, double max_norm) {
    const double norm = static_cast<double>(grads.global_norm());
    if (max_norm > 0 && norm > max_norm) {
        grads.scale(static_cast<Real>(max_norm / norm));
    }
    return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(ad::Gradients<float>&, double);
template double clip_grad_norm<double>(ad::Gradients<double>&, double);

} // namespace mcle::train
