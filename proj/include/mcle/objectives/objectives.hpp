// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training losses: teacher-forced cross-entropy over the COT, the three
// contrastive levels (semantic, image, instance) and their weighted total.
//
// Anything that involves discrete choices (negative answers, mined images,
// attribution top-k) is resolved up front by prepare_batch(), so that
// batch_loss() is a pure differentiable function of the parameters.

#pragma once

#include "mcle/contrastive/contrastive.hpp"
#include "mcle/data/cot.hpp"
#include "mcle/data/dataset.hpp"
#include "mcle/data/vocab.hpp"
#include "mcle/mining/mining.hpp"
#include "mcle/model/backbone.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mcle::objectives {

using ad::Matrix;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

struct LossWeights {
    double alpha = 0.1;  // semantic
    double beta = 0.2;   // image
    double gamma = 0.2;  // instance

    void validate() const;
};

struct TopK {
    int semantic = 3;
    int image = 3;
    int instance = 2;
};

struct LevelSwitches {
    bool semantic = true;
    bool image = true;
    bool instance = true;
};

enum class VqaNormalization { per_token, raw_sum };

struct ObjectiveConfig {
    LossWeights weights;
    TopK top_k;
    LevelSwitches levels;
    VqaNormalization vqa_norm = VqaNormalization::per_token;
    data::CotOrder order = data::CotOrder::explain_first;
    int max_text_len = data::kDefaultMaxTextLen;
};

struct LossBreakdown {
    double l_vqa = 0;
    double l_sem = 0;
    double l_img = 0;
    double l_ins = 0;
    double total = 0;
};

// total = l_vqa + alpha l_sem + beta l_img + gamma l_ins. Throws NumericError
// naming the first non-finite component.
LossBreakdown total_loss(double l_vqa, double l_sem, double l_img, double l_ins, const LossWeights& weights);

// Backbone plus one projection head per contrastive level and the shared
// temperature.
template <typename Real>
struct MclePrograms {
    const model::Backbone<Real>* backbone = nullptr;
    contrastive::ProjectionHead sem;
    contrastive::ProjectionHead img;
    contrastive::ProjectionHead ins;
    contrastive::Temperature temperature;
    int mask_id = data::Vocab::kMask;

    // Registers "cl.sem", "cl.img", "cl.ins" and "cl.log_tau".
    static void register_parameters(ParameterStore<Real>& params, int d, double tau_init, std::mt19937_64& rng);
    static MclePrograms bind(const model::Backbone<Real>& backbone, const ParameterStore<Real>& params);
};

// Negative gold log-likelihood over the whole COT, divided by its length in
// per_token mode.
template <typename Real>
Var<Real> vqa_loss(const model::DecoderOutputs<Real>& outputs, const data::CotSequence& cot,
                   VqaNormalization norm = VqaNormalization::per_token);

// Picks k batch members whose answer differs from the anchor's, uniformly
// without replacement. With fewer than k eligible it samples with
// replacement (from every other member if none is eligible) and bumps
// degenerate_batch_count().
std::vector<int> sample_negative_answers(std::span<const std::vector<int>> batch_answers, int anchor_idx, int k,
                                         std::mt19937_64& rng);
std::int64_t degenerate_batch_count();
void reset_degenerate_batch_count();

// y = xi([Z_V; Z_Q; Z_E]), x = xi(H_A), S = {xi(H_A-hat)}
template <typename Real>
Var<Real> semantic_cl(const Var<Real>& zv, const Var<Real>& zq, const Var<Real>& ze, const Var<Real>& h_ans,
                      const std::vector<Var<Real>>& negative_h_ans, const contrastive::ProjectionHead& head,
                      const Var<Real>& tau, const ParameterStore<Real>& params);

// y = xi([H_E; H_A]), x = xi([Z_V; Z_Q]), S = {xi([Z_V-hat; Z_Q])}
template <typename Real>
Var<Real> image_cl(const Var<Real>& h_expl, const Var<Real>& h_ans, const Var<Real>& zv, const Var<Real>& zq,
                   const std::vector<Var<Real>>& counterfactual_zv, const contrastive::ProjectionHead& head,
                   const Var<Real>& tau, const ParameterStore<Real>& params);

// y = xi([H_E; H_A]), x = xi([Z+_V; Z+_Q]), S = {xi([Z-_V; Z-_Q])}
template <typename Real>
Var<Real> instance_cl(const Var<Real>& h_expl, const Var<Real>& h_ans, const Var<Real>& factual,
                      const Var<Real>& counterfactual, const contrastive::ProjectionHead& head, const Var<Real>& tau,
                      const ParameterStore<Real>& params);

template <typename Real>
struct MemberMaterial {
    data::TokenizedSample tokens;
    data::CotSequence cot;
    Matrix<Real> raw;
    std::vector<int> negative_members;
    // Z_V of the mined images, encoded when the batch was prepared and held
    // constant by the loss.
    std::vector<Matrix<Real>> counterfactual_zv;
    mining::FactualSplit split;
};

template <typename Real>
struct BatchMaterial {
    std::vector<MemberMaterial<Real>> members;
};

// Resolves negatives, mined images and attribution splits for the samples
// at `indices` of `split`. `index` may be null when the image level is off.
template <typename Real>
BatchMaterial<Real> prepare_batch(const MclePrograms<Real>& programs, const ParameterStore<Real>& params,
                                  const data::DatasetSplit& split, std::span<const std::size_t> indices,
                                  const data::Vocab& vocab, const mining::MiningIndex* index,
                                  const ObjectiveConfig& config, std::mt19937_64& rng);

template <typename Real>
struct BatchLoss {
    Var<Real> total;
    // Unweighted component means; a disabled level holds a constant 0.
    Var<Real> vqa, sem, img, ins;
    LossBreakdown breakdown;
    double tau = 0;
};

// Batch mean of every component, combined with the configured weights.
// Disabled levels are neither computed nor differentiated and report 0.
template <typename Real>
BatchLoss<Real> batch_loss(Tape<Real>& tape, const MclePrograms<Real>& programs, const ParameterStore<Real>& params,
                           const BatchMaterial<Real>& batch, const ObjectiveConfig& config);

} // namespace mcle::objectives
