// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/contrastive/contrastive.hpp"

#include "mcle/common/error.hpp"

#include <atomic>
#include <cmath>

namespace mcle::contrastive {

namespace {

std::atomic<std::int64_t> g_zero_norm{0};

template <typename Real>
ad::ParamId bind_shaped(const ParameterStore<Real>& params, const std::string& name, Eigen::Index rows,
                        Eigen::Index cols) {
    if (!params.contains(name)) {
        throw ConfigError("contrastive parameter missing: " + name);
    }
    const auto id = params.id_of(name);
    const auto& v = params.at(id).value;
    if (v.rows() != rows || v.cols() != cols) {
        throw ConfigError("contrastive parameter " + name + " has the wrong shape");
    }
    return id;
}

} // namespace

template <typename Real>
ProjectionHead ProjectionHead::create(ParameterStore<Real>& params, const std::string& name, int d,
                                      std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    ad::Matrix<Real> w(d, d);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = static_cast<Real>(dist(rng));
    }
    ProjectionHead h;
    h.w = params.add(name + ".w", std::move(w));
    h.b = params.add(name + ".b", ad::Matrix<Real>::Zero(1, d));
    return h;
}

template <typename Real>
ProjectionHead ProjectionHead::bind(const ParameterStore<Real>& params, const std::string& name, int d) {
    return {bind_shaped(params, name + ".w", d, d), bind_shaped(params, name + ".b", 1, d)};
}

template <typename Real>
Temperature Temperature::create(ParameterStore<Real>& params, const std::string& name, double tau_init) {
    if (!(tau_init > 0) || !std::isfinite(tau_init)) {
        throw ConfigError("tau_init must be positive and finite");
    }
    ad::Matrix<Real> v(1, 1);
    v(0, 0) = static_cast<Real>(std::log(tau_init));
    return {params.add(name, std::move(v))};
}

template <typename Real>
Temperature Temperature::bind(const ParameterStore<Real>& params, const std::string& name) {
    return {bind_shaped(params, name, 1, 1)};
}

template <typename Real>
Var<Real> Temperature::tau(ad::Tape<Real>& tape, const ParameterStore<Real>& params) const {
    return ad::exp(tape.param(params, log_tau));
}

template <typename Real>
Var<Real> project(const Var<Real>& seq, const ProjectionHead& head, const ParameterStore<Real>& params) {
    if (seq.rows() == 0) {
        throw InvalidArgument("project: empty sequence");
    }
    auto& t = *seq.tape();
    return ad::mean_rows(ad::relu(ad::add_row(ad::matmul(seq, t.param(params, head.w)), t.param(params, head.b))));
}

template <typename Real>
Var<Real> similarity(const Var<Real>& u, const Var<Real>& v) {
    if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols()) {
        throw InvalidArgument("similarity: expects two 1 x d rows of equal width");
    }
    auto& t = *u.tape();
    const double nu = static_cast<double>(u.value().norm());
    const double nv = static_cast<double>(v.value().norm());
    if (nu == 0.0 || nv == 0.0) {
        g_zero_norm.fetch_add(1, std::memory_order_relaxed);
        return t.constant(ad::Matrix<Real>::Zero(1, 1));
    }
    const double dot = static_cast<double>(u.value().cwiseProduct(v.value()).sum());
    ad::Matrix<Real> out(1, 1);
    out(0, 0) = static_cast<Real>(dot / (nu * nv));
    const int iu = u.id();
    const int iv = v.id();
    return t.push(std::move(out), {u, v}, [iu, iv, nu, nv](ad::Tape<Real>& tape, int self) {
        const Real g = tape.grad(self)(0, 0);
        const Real cos = tape.value(self)(0, 0);
        const auto& uv = tape.value(iu);
        const auto& vv = tape.value(iv);
        const auto inv = static_cast<Real>(1.0 / (nu * nv));
        // d cos / du = v / (|u||v|) - cos * u / |u|^2
        if (tape.requires_grad(iu)) {
            tape.accumulate(iu, g * (vv * inv - uv * (cos / static_cast<Real>(nu * nu))));
        }
        if (tape.requires_grad(iv)) {
            tape.accumulate(iv, g * (uv * inv - vv * (cos / static_cast<Real>(nv * nv))));
        }
    });
}

std::int64_t zero_norm_similarity_count() {
    return g_zero_norm.load(std::memory_order_relaxed);
}

void reset_zero_norm_similarity_count() {
    g_zero_norm.store(0, std::memory_order_relaxed);
}

template <typename Real>
Var<Real> contrastive_loss_from_similarities(const Var<Real>& sims, const Var<Real>& tau) {
    if (sims.rows() != 1 || sims.cols() < 2) {
        throw InvalidArgument("contrastive loss needs a positive and at least one negative");
    }
    if (!sims.value().allFinite()) {
        throw NumericError("contrastive loss: non-finite similarity");
    }
    if (tau.rows() != 1 || tau.cols() != 1 || !(tau.scalar() > 0)) {
        throw NumericError("contrastive loss: temperature must be a positive scalar");
    }
    const auto lp = ad::log_softmax_rows(ad::div_scalar(sims, tau));
    const Eigen::Index zero = 0;
    return ad::scale(ad::pick(lp, std::span<const Eigen::Index>(&zero, 1), std::span<const Eigen::Index>(&zero, 1)),
                     Real(-1));
}

template <typename Real>
Var<Real> contrastive_loss(const ContrastiveTriplet<Real>& triplet) {
    if (triplet.negatives.empty()) {
        throw InvalidArgument("contrastive loss needs at least one negative");
    }
    std::vector<Var<Real>> sims;
    sims.reserve(triplet.negatives.size() + 1);
    sims.push_back(similarity(triplet.positive, triplet.anchor));
    for (const auto& neg : triplet.negatives) {
        sims.push_back(similarity(neg, triplet.anchor));
    }
    return contrastive_loss_from_similarities(ad::concat_cols(sims), triplet.tau);
}

#define MCLE_CL_INSTANTIATE(Real)                                                                                  \
    template ProjectionHead ProjectionHead::create<Real>(ParameterStore<Real>&, const std::string&, int,          \
                                                         std::mt19937_64&);                                        \
    template ProjectionHead ProjectionHead::bind<Real>(const ParameterStore<Real>&, const std::string&, int);      \
    template Temperature Temperature::create<Real>(ParameterStore<Real>&, const std::string&, double);            \
    template Temperature Temperature::bind<Real>(const ParameterStore<Real>&, const std::string&);                \
    template Var<Real> Temperature::tau<Real>(ad::Tape<Real>&, const ParameterStore<Real>&) const;                \
    template Var<Real> project<Real>(const Var<Real>&, const ProjectionHead&, const ParameterStore<Real>&);       \
    template Var<Real> similarity<Real>(const Var<Real>&, const Var<Real>&);                                      \
    template Var<Real> contrastive_loss_from_similarities<Real>(const Var<Real>&, const Var<Real>&);              \
    template Var<Real> contrastive_loss<Real>(const ContrastiveTriplet<Real>&);

MCLE_CL_INSTANTIATE(float)
MCLE_CL_INSTANTIATE(double)

} // namespace mcle::contrastive
