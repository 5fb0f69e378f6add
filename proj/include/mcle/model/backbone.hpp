// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contract every vision-language backbone implements. Downstream losses,
// mining and evaluation only talk to this interface.

#pragma once

#include "mcle/ad/ops.hpp"
#include "mcle/data/cot.hpp"
#include "mcle/data/dataset.hpp"
#include "mcle/model/config.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mcle::model {

using ad::Matrix;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

template <typename Real>
Matrix<Real> feature_matrix(const data::FeatureMatrix& f) {
    Matrix<Real> m(f.rows, f.cols);
    for (int i = 0; i < f.rows * f.cols; ++i) {
        m.data()[i] = static_cast<Real>(f.data[static_cast<std::size_t>(i)]);
    }
    return m;
}

template <typename Real>
struct DecoderOutputs {
    // Row i is the log-distribution over the vocabulary for COT token i.
    Var<Real> token_logprobs;
    // Embedded COT tokens (Z_T) and the final hidden rows at each COT
    // position; the span views below slice these.
    Var<Real> cot_embeddings;
    Var<Real> hidden;
    Var<Real> hidden_expl;
    Var<Real> hidden_ans;
    data::TokenSpan explanation;
    data::TokenSpan answer;
};

struct ForwardOptions {
    // Per image slot: 0 hides the slot from every attention query. Empty
    // means all visible.
    std::vector<std::uint8_t> image_slot_visible;
};

struct DecodeConfig {
    std::vector<int> start_ids;
    int eos_id = 2;
    int max_len = 40;
    enum class Strategy { greedy, beam } strategy = Strategy::greedy;
    int beam_width = 1;  // used by Strategy::beam
};

template <typename Real>
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual const ModelConfig& config() const = 0;

    // raw is m x d_raw; result is Z_V (m x d).
    virtual Var<Real> encode_image(const Var<Real>& raw, const ParameterStore<Real>& params) const = 0;
    // Token embeddings plus positions offset..offset+t-1.
    virtual Var<Real> embed_text(Tape<Real>& tape, std::span<const int> ids, const ParameterStore<Real>& params,
                                 int position_offset = 0) const = 0;
    // Raw embedding rows with no positional term.
    virtual Var<Real> word_embeddings(Tape<Real>& tape, std::span<const int> ids,
                                      const ParameterStore<Real>& params) const = 0;

    // Teacher-forced pass over [Z_V; Z_Q; Z_T]. Z_Q must already carry
    // positions 0..n-1; the COT is embedded from position n.
    virtual DecoderOutputs<Real> forward_cot(const Var<Real>& zv, const Var<Real>& zq, const data::CotSequence& cot,
                                             const ParameterStore<Real>& params,
                                             const ForwardOptions& options = {}) const = 0;

    // Sum of log-probabilities of the answer words of `cot` (prefix run and
    // <eos> excluded) given image, question and the explanation.
    virtual Var<Real> answer_logprob(const Var<Real>& zv, const Var<Real>& zq, const data::CotSequence& cot,
                                     const ParameterStore<Real>& params,
                                     const ForwardOptions& options = {}) const = 0;

    // Returns start_ids followed by the continuation, including <eos> when
    // one was produced.
    virtual std::vector<int> generate(const Matrix<Real>& zv, const Matrix<Real>& zq,
                                      const ParameterStore<Real>& params, const DecodeConfig& decode) const = 0;
};

} // namespace mcle::model
