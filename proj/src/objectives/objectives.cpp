// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/objectives/objectives.hpp"

#include "mcle/common/error.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

namespace mcle::objectives {

namespace {

std::atomic<std::int64_t> g_degenerate{0};

void check_finite(double v, const char* name) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite loss component ") + name);
    }
}

template <typename Real>
Var<Real> scalar_const(Tape<Real>& tape, double v) {
    Matrix<Real> m(1, 1);
    m(0, 0) = static_cast<Real>(v);
    return tape.constant(std::move(m));
}

template <typename Real>
Var<Real> mean_of(Tape<Real>& tape, const std::vector<Var<Real>>& xs) {
    if (xs.empty()) {
        return scalar_const(tape, 0.0);
    }
    Var<Real> acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        acc = ad::add(acc, xs[i]);
    }
    return ad::scale(acc, static_cast<Real>(1.0 / static_cast<double>(xs.size())));
}

} // namespace

void LossWeights::validate() const {
    for (double w : {alpha, beta, gamma}) {
        if (!std::isfinite(w) || w < 0) {
            throw ConfigError("loss weights must be finite and non-negative");
        }
    }
}

LossBreakdown total_loss(double l_vqa, double l_sem, double l_img, double l_ins, const LossWeights& weights) {
    check_finite(l_vqa, "l_vqa");
    check_finite(l_sem, "l_sem");
    check_finite(l_img, "l_img");
    check_finite(l_ins, "l_ins");
    LossBreakdown b{l_vqa, l_sem, l_img, l_ins, 0.0};
    b.total = l_vqa + weights.alpha * l_sem + weights.beta * l_img + weights.gamma * l_ins;
    check_finite(b.total, "total");
    return b;
}

template <typename Real>
void MclePrograms<Real>::register_parameters(ParameterStore<Real>& params, int d, double tau_init,
                                             std::mt19937_64& rng) {
    contrastive::ProjectionHead::create(params, "cl.sem", d, rng);
    contrastive::ProjectionHead::create(params, "cl.img", d, rng);
    contrastive::ProjectionHead::create(params, "cl.ins", d, rng);
    contrastive::Temperature::create(params, "cl.log_tau", tau_init);
}

template <typename Real>
MclePrograms<Real> MclePrograms<Real>::bind(const model::Backbone<Real>& backbone,
                                            const ParameterStore<Real>& params) {
    const int d = backbone.config().d;
    MclePrograms p;
    p.backbone = &backbone;
    p.sem = contrastive::ProjectionHead::bind(params, "cl.sem", d);
    p.img = contrastive::ProjectionHead::bind(params, "cl.img", d);
    p.ins = contrastive::ProjectionHead::bind(params, "cl.ins", d);
    p.temperature = contrastive::Temperature::bind(params, "cl.log_tau");
    return p;
}

template <typename Real>
Var<Real> vqa_loss(const model::DecoderOutputs<Real>& outputs, const data::CotSequence& cot, VqaNormalization norm) {
    const auto t = static_cast<Eigen::Index>(cot.ids.size());
    if (t == 0 || outputs.token_logprobs.rows() != t) {
        throw InvalidArgument("vqa_loss: log-probabilities do not match the COT length");
    }
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(t));
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(t));
    for (Eigen::Index i = 0; i < t; ++i) {
        rows[static_cast<std::size_t>(i)] = i;
        cols[static_cast<std::size_t>(i)] = cot.ids[static_cast<std::size_t>(i)];
    }
    const auto nll = ad::scale(ad::sum(ad::pick(outputs.token_logprobs, rows, cols)), Real(-1));
    if (norm == VqaNormalization::raw_sum) {
        return nll;
    }
    return ad::scale(nll, static_cast<Real>(1.0 / static_cast<double>(t)));
}

std::vector<int> sample_negative_answers(std::span<const std::vector<int>> batch_answers, int anchor_idx, int k,
                                         std::mt19937_64& rng) {
    const int n = static_cast<int>(batch_answers.size());
    if (anchor_idx < 0 || anchor_idx >= n) {
        throw InvalidArgument("sample_negative_answers: anchor out of range");
    }
    if (k < 1) {
        throw InvalidArgument("sample_negative_answers: k must be >= 1");
    }
    if (n < 2) {
        throw InvalidArgument("sample_negative_answers: batch needs at least two members");
    }
    const auto& anchor = batch_answers[static_cast<std::size_t>(anchor_idx)];
    std::vector<int> eligible;
    for (int i = 0; i < n; ++i) {
        if (i != anchor_idx && batch_answers[static_cast<std::size_t>(i)] != anchor) {
            eligible.push_back(i);
        }
    }
    if (static_cast<int>(eligible.size()) >= k) {
        // partial Fisher-Yates
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<int> pick(i, static_cast<int>(eligible.size()) - 1);
            std::swap(eligible[static_cast<std::size_t>(i)], eligible[static_cast<std::size_t>(pick(rng))]);
        }
        eligible.resize(static_cast<std::size_t>(k));
        return eligible;
    }
    g_degenerate.fetch_add(1, std::memory_order_relaxed);
    if (eligible.empty()) {
        for (int i = 0; i < n; ++i) {
            if (i != anchor_idx) {
                eligible.push_back(i);
            }
        }
    }
    std::vector<int> out(static_cast<std::size_t>(k));
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    for (auto& o : out) {
        o = eligible[pick(rng)];
    }
    return out;
}

std::int64_t degenerate_batch_count() {
    return g_degenerate.load(std::memory_order_relaxed);
}

void reset_degenerate_batch_count() {
    g_degenerate.store(0, std::memory_order_relaxed);
}

template <typename Real>
Var<Real> semantic_cl(const Var<Real>& zv, const Var<Real>& zq, const Var<Real>& ze, const Var<Real>& h_ans,
                      const std::vector<Var<Real>>& negative_h_ans, const contrastive::ProjectionHead& head,
                      const Var<Real>& tau, const ParameterStore<Real>& params) {
    contrastive::ContrastiveTriplet<Real> tr;
    tr.anchor = contrastive::project(ad::concat_rows({zv, zq, ze}), head, params);
    tr.positive = contrastive::project(h_ans, head, params);
    for (const auto& h : negative_h_ans) {
        tr.negatives.push_back(contrastive::project(h, head, params));
    }
    tr.tau = tau;
    return contrastive::contrastive_loss(tr);
}

template <typename Real>
Var<Real> image_cl(const Var<Real>& h_expl, const Var<Real>& h_ans, const Var<Real>& zv, const Var<Real>& zq,
                   const std::vector<Var<Real>>& counterfactual_zv, const contrastive::ProjectionHead& head,
                   const Var<Real>& tau, const ParameterStore<Real>& params) {
    contrastive::ContrastiveTriplet<Real> tr;
    tr.anchor = contrastive::project(ad::concat_rows({h_expl, h_ans}), head, params);
    tr.positive = contrastive::project(ad::concat_rows({zv, zq}), head, params);
    for (const auto& cf : counterfactual_zv) {
        tr.negatives.push_back(contrastive::project(ad::concat_rows({cf, zq}), head, params));
    }
    tr.tau = tau;
    return contrastive::contrastive_loss(tr);
}

template <typename Real>
Var<Real> instance_cl(const Var<Real>& h_expl, const Var<Real>& h_ans, const Var<Real>& factual,
                      const Var<Real>& counterfactual, const contrastive::ProjectionHead& head, const Var<Real>& tau,
                      const ParameterStore<Real>& params) {
    contrastive::ContrastiveTriplet<Real> tr;
    tr.anchor = contrastive::project(ad::concat_rows({h_expl, h_ans}), head, params);
    tr.positive = contrastive::project(factual, head, params);
    tr.negatives.push_back(contrastive::project(counterfactual, head, params));
    tr.tau = tau;
    return contrastive::contrastive_loss(tr);
}

template <typename Real>
BatchMaterial<Real> prepare_batch(const MclePrograms<Real>& programs, const ParameterStore<Real>& params,
                                  const data::DatasetSplit& split, std::span<const std::size_t> indices,
                                  const data::Vocab& vocab, const mining::MiningIndex* index,
                                  const ObjectiveConfig& config, std::mt19937_64& rng) {
    const auto& model = *programs.backbone;
    BatchMaterial<Real> batch;
    batch.members.reserve(indices.size());
    for (auto i : indices) {
        if (i >= split.size()) {
            throw InvalidArgument("prepare_batch: sample index out of range");
        }
        const auto& s = split.samples[i];
        MemberMaterial<Real> mm;
        mm.tokens = data::tokenize_sample(s, vocab);
        mm.cot = data::assemble_cot(mm.tokens, vocab, config.max_text_len, config.order);
        mm.raw = model::feature_matrix<Real>(split.features(s.image_ref));
        batch.members.push_back(std::move(mm));
    }

    if (config.levels.semantic && batch.members.size() >= 2) {
        std::vector<std::vector<int>> answers;
        for (const auto& mm : batch.members) {
            answers.push_back(mm.tokens.answer_ids);
        }
        for (std::size_t j = 0; j < batch.members.size(); ++j) {
            batch.members[j].negative_members =
                sample_negative_answers(answers, static_cast<int>(j), config.top_k.semantic, rng);
        }
    }

    if (config.levels.image) {
        if (index == nullptr) {
            throw InvalidArgument("prepare_batch: image level needs a mining index");
        }
        for (auto& mm : batch.members) {
            const auto* anchor = index->find(mm.tokens.sample_id);
            if (anchor == nullptr) {
                continue;
            }
            Tape<Real> t(false);
            for (const auto& mined : mining::mine_counterfactual_images(*index, *anchor, config.top_k.image)) {
                const auto raw = model::feature_matrix<Real>(split.features(mined.image_ref));
                mm.counterfactual_zv.push_back(model.encode_image(t.constant(raw), params).value());
            }
        }
    }

    if (config.levels.instance) {
        for (auto& mm : batch.members) {
            Tape<Real> t(false);
            const auto zv = model.encode_image(t.constant(mm.raw), params).value();
            const auto zq = model.embed_text(t, mm.tokens.question_ids, params).value();
            const auto scores = mining::attribution_scores(model, zv, zq, mm.cot, params);
            mm.split = mining::split_factual_counterfactual(scores, config.top_k.instance);
        }
    }
    return batch;
}

template <typename Real>
BatchLoss<Real> batch_loss(Tape<Real>& tape, const MclePrograms<Real>& programs, const ParameterStore<Real>& params,
                           const BatchMaterial<Real>& batch, const ObjectiveConfig& config) {
    if (batch.members.empty()) {
        throw InvalidArgument("batch_loss: empty batch");
    }
    const auto& model = *programs.backbone;
    const std::size_t n = batch.members.size();

    struct Pass {
        Var<Real> zv, zq;
        model::DecoderOutputs<Real> out;
    };
    std::vector<Pass> passes;
    passes.reserve(n);
    std::vector<Var<Real>> vqa;
    for (const auto& mm : batch.members) {
        Pass p;
        p.zv = model.encode_image(tape.constant(mm.raw), params);
        p.zq = model.embed_text(tape, mm.tokens.question_ids, params);
        p.out = model.forward_cot(p.zv, p.zq, mm.cot, params);
        vqa.push_back(vqa_loss(p.out, mm.cot, config.vqa_norm));
        passes.push_back(std::move(p));
    }

    const auto tau = programs.temperature.tau(tape, params);
    std::vector<Var<Real>> sem, img, ins;

    if (config.levels.semantic) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mm = batch.members[j];
            if (mm.negative_members.empty()) {
                continue;
            }
            const auto& p = passes[j];
            const auto ze = ad::slice_rows(p.out.cot_embeddings, mm.cot.explanation.begin, mm.cot.explanation.size());
            std::vector<Var<Real>> negs;
            for (int k : mm.negative_members) {
                negs.push_back(passes[static_cast<std::size_t>(k)].out.hidden_ans);
            }
            sem.push_back(semantic_cl(p.zv, p.zq, ze, p.out.hidden_ans, negs, programs.sem, tau, params));
        }
    }

    if (config.levels.image) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mm = batch.members[j];
            if (mm.counterfactual_zv.empty()) {
                continue;
            }
            const auto& p = passes[j];
            std::vector<Var<Real>> cfs;
            for (const auto& zv : mm.counterfactual_zv) {
                cfs.push_back(tape.constant(zv));
            }
            img.push_back(image_cl(p.out.hidden_expl, p.out.hidden_ans, p.zv, p.zq, cfs, programs.img, tau, params));
        }
    }

    if (config.levels.instance) {
        const int mask_id = programs.mask_id;
        const auto mask_row = model.word_embeddings(tape, std::span<const int>(&mask_id, 1), params);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mm = batch.members[j];
            const auto& p = passes[j];
            const auto factual = ad::concat_rows({mining::masked_view(p.zv, mask_row, mm.split.kept_objects),
                                                  mining::masked_view(p.zq, mask_row, mm.split.kept_words)});
            const auto counter = ad::concat_rows({mining::masked_view(p.zv, mask_row, mm.split.masked_objects),
                                                  mining::masked_view(p.zq, mask_row, mm.split.masked_words)});
            ins.push_back(instance_cl(p.out.hidden_expl, p.out.hidden_ans, factual, counter, programs.ins, tau, params));
        }
    }

    const auto l_vqa = mean_of(tape, vqa);
    const auto l_sem = mean_of(tape, sem);
    const auto l_img = mean_of(tape, img);
    const auto l_ins = mean_of(tape, ins);

    BatchLoss<Real> res;
    res.breakdown = total_loss(l_vqa.scalar(), l_sem.scalar(), l_img.scalar(), l_ins.scalar(), config.weights);
    res.tau = static_cast<double>(tau.scalar());

    const auto& w = config.weights;
    Var<Real> total = l_vqa;
    if (!sem.empty()) {
        total = ad::add(total, ad::scale(l_sem, static_cast<Real>(w.alpha)));
    }
    if (!img.empty()) {
        total = ad::add(total, ad::scale(l_img, static_cast<Real>(w.beta)));
    }
    if (!ins.empty()) {
        total = ad::add(total, ad::scale(l_ins, static_cast<Real>(w.gamma)));
    }
    res.total = total;
    res.vqa = l_vqa;
    res.sem = l_sem;
    res.img = l_img;
    res.ins = l_ins;
    return res;
}

#define MCLE_OBJECTIVES_INSTANTIATE(Real)                                                                          \
    template struct MclePrograms<Real>;                                                                            \
    template Var<Real> vqa_loss<Real>(const model::DecoderOutputs<Real>&, const data::CotSequence&,               \
                                      VqaNormalization);                                                           \
    template Var<Real> semantic_cl<Real>(const Var<Real>&, const Var<Real>&, const Var<Real>&, const Var<Real>&,  \
                                         const std::vector<Var<Real>>&, const contrastive::ProjectionHead&,        \
                                         const Var<Real>&, const ParameterStore<Real>&);                           \
    template Var<Real> image_cl<Real>(const Var<Real>&, const Var<Real>&, const Var<Real>&, const Var<Real>&,     \
                                      const std::vector<Var<Real>>&, const contrastive::ProjectionHead&,           \
                                      const Var<Real>&, const ParameterStore<Real>&);                              \
    template Var<Real> instance_cl<Real>(const Var<Real>&, const Var<Real>&, const Var<Real>&, const Var<Real>&,  \
                                         const contrastive::ProjectionHead&, const Var<Real>&,                     \
                                         const ParameterStore<Real>&);                                             \
    template BatchMaterial<Real> prepare_batch<Real>(const MclePrograms<Real>&, const ParameterStore<Real>&,      \
                                                     const data::DatasetSplit&, std::span<const std::size_t>,      \
                                                     const data::Vocab&, const mining::MiningIndex*,               \
                                                     const ObjectiveConfig&, std::mt19937_64&);                    \
    template BatchLoss<Real> batch_loss<Real>(Tape<Real>&, const MclePrograms<Real>&, const ParameterStore<Real>&, \
                                              const BatchMaterial<Real>&, const ObjectiveConfig&);

MCLE_OBJECTIVES_INSTANTIATE(float)
MCLE_OBJECTIVES_INSTANTIATE(double)

} // namespace mcle::objectives
