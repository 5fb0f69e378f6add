// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mcle/ad/tape.hpp"

#include <cstdint>

namespace mcle::train {

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Applied to matrices with more than one row; biases, gains and scalars
    // are not decayed.
    double weight_decay = 0.01;
};

template <typename Real>
class AdamW {
public:
    AdamW(const ad::ParameterStore<Real>& params, AdamWConfig config);

    void step(ad::ParameterStore<Real>& params, const ad::Gradients<Real>& grads);

    const AdamWConfig& config() const { return config_; }
    void set_lr(double lr) { config_.lr = lr; }
    std::int64_t steps() const { return steps_; }
    // Moment buffers, named like the parameters they track.
    const ad::ParameterStore<Real>& first_moments() const { return m_; }
    const ad::ParameterStore<Real>& second_moments() const { return v_; }
    void restore(ad::ParameterStore<Real> m, ad::ParameterStore<Real> v, std::int64_t steps);

private:
    AdamWConfig config_;
    ad::ParameterStore<Real> m_;
    ad::ParameterStore<Real> v_;
    std::int64_t steps_ = 0;
};

// Rescales grads so their global norm is at most max_norm. Returns the norm
// before clipping.
template <typename Real>
double clip_grad_norm(ad::Gradients<Real>& grads, double max_norm);

extern template class AdamW<float>;
extern template class AdamW<double>;

} // namespace mcle::train
