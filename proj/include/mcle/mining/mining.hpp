// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Material for the image and instance contrastive levels: retrieval of
// counterfactual images through a question/answer embedding index, and
// gradient attribution that splits a sample into factual and counterfactual
// views.

#pragma once

#include "mcle/data/dataset.hpp"
#include "mcle/data/vocab.hpp"
#include "mcle/model/backbone.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace mcle::mining {

using ad::Matrix;
using ad::ParameterStore;
using ad::Var;

// Mean of the model's word-embedding rows for `ids`, no positional term.
template <typename Real>
Eigen::RowVectorXd text_embedding(const model::Backbone<Real>& model, std::span<const int> ids,
                                  const ParameterStore<Real>& params);

struct MiningEntry {
    std::string sample_id;
    std::string image_ref;
    std::vector<int> answer_ids;
    Eigen::RowVectorXd e_q;
    Eigen::RowVectorXd e_a;
};

struct MiningIndex {
    std::vector<MiningEntry> entries;  // sample_id order

    const MiningEntry* find(std::string_view sample_id) const;
    std::size_t size() const { return entries.size(); }
};

template <typename Real>
MiningIndex build_mining_index(const data::DatasetSplit& split, const data::Vocab& vocab,
                               const model::Backbone<Real>& model, const ParameterStore<Real>& params);

// Cosine of two rows; 0 when either has zero norm.
double cosine(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v);

// sim(e_q_hat, e_q) - sim(e_a_hat, e_a)
double mining_score(const MiningEntry& anchor, const MiningEntry& candidate);

struct MinedImage {
    std::string sample_id;
    std::string image_ref;
    double score = 0.0;

    bool operator==(const MinedImage&) const = default;
};

// Top-K candidates by score, excluding the anchor and every entry whose
// answer tokens equal the anchor's; ties go to the smaller sample_id. When
// fewer than K are eligible all of them are returned and
// mining_shortfall_count() is bumped.
std::vector<MinedImage> mine_counterfactual_images(const MiningIndex& index, const MiningEntry& anchor, int k);
std::vector<MinedImage> mine_counterfactual_images(const MiningIndex& index, std::string_view anchor_id, int k);

std::int64_t mining_shortfall_count();
void reset_mining_shortfall_count();

struct AttributionScores {
    std::vector<double> object_scores;
    std::vector<double> word_scores;
};

// object_scores[i] = 1 . d answer_logprob / d Z_V[i], word_scores likewise
// for Z_Q rows, with the explanation teacher-forced through `cot`. The
// log-probability is multiplied by `scale` before differentiating.
template <typename Real>
AttributionScores attribution_scores(const model::Backbone<Real>& model, const Matrix<Real>& zv,
                                     const Matrix<Real>& zq, const data::CotSequence& cot,
                                     const ParameterStore<Real>& params, const model::ForwardOptions& options = {},
                                     double scale = 1.0);

// Indices are 0-based and ascending.
struct FactualSplit {
    std::vector<int> kept_objects;
    std::vector<int> kept_words;
    std::vector<int> masked_objects;
    std::vector<int> masked_words;
};

// Keeps the top-k_ins objects and top-k_ins words (ties to the lower index).
FactualSplit split_factual_counterfactual(const AttributionScores& scores, int k_ins);

// Rows of `seq` whose index is listed in `keep`, `mask_row` everywhere else.
template <typename Real>
Var<Real> masked_view(const Var<Real>& seq, const Var<Real>& mask_row, const std::vector<int>& keep);

} // namespace mcle::mining
