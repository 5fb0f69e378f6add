// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/harness/evaluate.hpp"

#include "mcle/data/cot.hpp"

namespace mcle::harness {

template <typename Real>
std::vector<eval::PredictionRecord> predict(const ModelBundle<Real>& bundle, const data::DatasetSplit& split) {
    const auto& vocab = bundle.vocab;
    const auto order = bundle.config.cot_order();
    auto decode = bundle.config.decode_config(data::Vocab::kEos);
    if (order == data::CotOrder::explain_first) {
        decode.start_ids = {vocab.because_id()};
    } else {
        const auto prefix = vocab.answer_prefix_ids();
        decode.start_ids.assign(prefix.begin(), prefix.end());
    }

    std::vector<eval::PredictionRecord> out;
    out.reserve(split.size());
    for (const auto& s : split.samples) {
        const auto tok = data::tokenize_sample(s, vocab);
        ad::Tape<Real> t(false);
        const auto raw = model::feature_matrix<Real>(split.features(s.image_ref));
        const auto zv = bundle.model->encode_image(t.constant(raw), bundle.params).value();
        const auto zq = bundle.model->embed_text(t, tok.question_ids, bundle.params).value();
        const auto ids = bundle.model->generate(zv, zq, bundle.params, decode);
        const auto parsed = data::parse_generation(ids, vocab, order);
        out.push_back({s.sample_id, vocab.decode_text(parsed.explanation_ids), vocab.decode_text(parsed.answer_ids)});
    }
    return out;
}

template <typename Real>
Evaluation evaluate(const ModelBundle<Real>& bundle, const data::DatasetSplit& split, eval::Mode mode,
                    const std::optional<std::filesystem::path>& predictions_out) {
    Evaluation e;
    e.predictions = predict(bundle, split);
    if (predictions_out) {
        eval::write_predictions(*predictions_out, e.predictions);
    }
    e.report = eval::evaluate_split(e.predictions, split, mode, bundle.config.answer_match_mode());
    return e;
}

Evaluation evaluate_checkpoint(const std::filesystem::path& checkpoint, const data::DatasetSplit& split,
                               eval::Mode mode, const std::optional<std::filesystem::path>& predictions_out) {
    if (model::precision_from_env() == model::Precision::f64) {
        return evaluate(load_bundle<double>(checkpoint), split, mode, predictions_out);
    }
    return evaluate(load_bundle<float>(checkpoint), split, mode, predictions_out);
}

template std::vector<eval::PredictionRecord> predict<float>(const ModelBundle<float>&, const data::DatasetSplit&);
template std::vector<eval::PredictionRecord> predict<double>(const ModelBundle<double>&, const data::DatasetSplit&);
template Evaluation evaluate<float>(const ModelBundle<float>&, const data::DatasetSplit&, eval::Mode,
                                    const std::optional<std::filesystem::path>&);
template Evaluation evaluate<double>(const ModelBundle<double>&, const data::DatasetSplit&, eval::Mode,
                                     const std::optional<std::filesystem::path>&);

} // namespace mcle::harness
