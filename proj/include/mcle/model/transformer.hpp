// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference backbone: a small pre-norm decoder-only transformer. Image slots
// are prepended without positions; text carries sinusoidal positions. Image
// and question rows attend to each other freely, COT rows attend causally.

#pragma once

#include "mcle/model/backbone.hpp"

#include <random>
#include <string>

namespace mcle::model {

template <typename Real>
class TinyTransformer final : public Backbone<Real> {
public:
    // Adds freshly initialised weights to `params` under the "bb." prefix.
    static void register_parameters(const ModelConfig& config, ParameterStore<Real>& params, std::mt19937_64& rng);

    // Binds to weights already in `params`; throws ConfigError when one is
    // missing or has the wrong shape.
    TinyTransformer(ModelConfig config, const ParameterStore<Real>& params);

    const ModelConfig& config() const override { return config_; }

    Var<Real> encode_image(const Var<Real>& raw, const ParameterStore<Real>& params) const override;
    Var<Real> embed_text(Tape<Real>& tape, std::span<const int> ids, const ParameterStore<Real>& params,
                         int position_offset = 0) const override;
    Var<Real> word_embeddings(Tape<Real>& tape, std::span<const int> ids,
                              const ParameterStore<Real>& params) const override;
    DecoderOutputs<Real> forward_cot(const Var<Real>& zv, const Var<Real>& zq, const data::CotSequence& cot,
                                     const ParameterStore<Real>& params,
                                     const ForwardOptions& options = {}) const override;
    Var<Real> answer_logprob(const Var<Real>& zv, const Var<Real>& zq, const data::CotSequence& cot,
                             const ParameterStore<Real>& params, const ForwardOptions& options = {}) const override;
    std::vector<int> generate(const Matrix<Real>& zv, const Matrix<Real>& zq, const ParameterStore<Real>& params,
                              const DecodeConfig& decode) const override;

    // Log-distribution for the token following `prefix_ids`.
    Matrix<Real> next_token_logprobs(const Matrix<Real>& zv, const Matrix<Real>& zq, std::span<const int> prefix_ids,
                                     const ParameterStore<Real>& params) const;

private:
    struct Block {
        ad::ParamId norm1_g, wq, wk, wv, wo, bo, norm2_g, w1, b1, w2, b2;
    };

    // Runs the blocks over x (rows = image + question + text) and returns
    // the final layer-normed hidden rows.
    Var<Real> run_blocks(Var<Real> x, int n_prefix, const ParameterStore<Real>& params,
                         const ForwardOptions& options) const;
    Var<Real> attention(const Var<Real>& x, const Block& blk, std::span<const std::uint8_t> allowed,
                        const ParameterStore<Real>& params) const;
    Var<Real> logits(const Var<Real>& hidden, const ParameterStore<Real>& params) const;
    Matrix<Real> positions(int offset, int count) const;
    void check_capacity(int text_positions) const;

    ModelConfig config_;
    ad::ParamId img_w_, img_b_, tok_emb_, normf_g_, head_w_, head_b_;
    std::vector<Block> blocks_;
};

extern template class TinyTransformer<float>;
extern template class TinyTransformer<double>;

} // namespace mcle::model
