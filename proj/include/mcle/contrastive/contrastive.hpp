// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mcle/ad/ops.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mcle::contrastive {

using ad::ParameterStore;
using ad::Var;

// xi(x_1..x_t) = mean_t ReLU(x_t W + b)
struct ProjectionHead {
    ad::ParamId w = -1;
    ad::ParamId b = -1;

    // Registers "<name>.w" (d x d) and "<name>.b" (1 x d).
    template <typename Real>
    static ProjectionHead create(ParameterStore<Real>& params, const std::string& name, int d, std::mt19937_64& rng);
    template <typename Real>
    static ProjectionHead bind(const ParameterStore<Real>& params, const std::string& name, int d);
};

// Shared learnable temperature stored as log tau.
struct Temperature {
    ad::ParamId log_tau = -1;

    template <typename Real>
    static Temperature create(ParameterStore<Real>& params, const std::string& name, double tau_init);
    template <typename Real>
    static Temperature bind(const ParameterStore<Real>& params, const std::string& name);

    template <typename Real>
    Var<Real> tau(ad::Tape<Real>& tape, const ParameterStore<Real>& params) const;
};

// 1 x d pooled projection of a t x d sequence.
template <typename Real>
Var<Real> project(const Var<Real>& seq, const ProjectionHead& head, const ParameterStore<Real>& params);

// Cosine similarity of two 1 x d rows as a 1 x 1 Var. A zero-norm input
// yields a constant 0 and bumps zero_norm_similarity_count().
template <typename Real>
Var<Real> similarity(const Var<Real>& u, const Var<Real>& v);

std::int64_t zero_norm_similarity_count();
void reset_zero_norm_similarity_count();

template <typename Real>
struct ContrastiveTriplet {
    Var<Real> anchor;                  // e_y
    Var<Real> positive;                // e_x
    std::vector<Var<Real>> negatives;  // e_x-hat, at least one
    Var<Real> tau;                     // 1 x 1, positive
};

// -log softmax over [sim(e_x, e_y), sim(e_xhat_k, e_y)...] / tau, first entry.
template <typename Real>
Var<Real> contrastive_loss(const ContrastiveTriplet<Real>& triplet);

// Same loss from precomputed similarities: sims is 1 x (K+1) with the
// positive first.
template <typename Real>
Var<Real> contrastive_loss_from_similarities(const Var<Real>& sims, const Var<Real>& tau);

} // namespace mcle::contrastive
