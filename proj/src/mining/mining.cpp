// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/mining/mining.hpp"

#include "mcle/common/error.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>

namespace mcle::mining {

namespace {

std::atomic<std::int64_t> g_shortfall{0};

// Indices of the k largest values, ties to the lower index, ascending.
std::vector<int> top_k_indices(const std::vector<double>& values, int k) {
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    });
    order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<int> complement(const std::vector<int>& kept, std::size_t n) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(n); ++i) {
        if (!std::binary_search(kept.begin(), kept.end(), i)) {
            out.push_back(i);
        }
    }
    return out;
}

} // namespace

template <typename Real>
Eigen::RowVectorXd text_embedding(const model::Backbone<Real>& model, std::span<const int> ids,
                                  const ParameterStore<Real>& params) {
    if (ids.empty()) {
        throw InvalidArgument("text_embedding: empty id sequence");
    }
    ad::Tape<Real> t(false);
    const auto rows = model.word_embeddings(t, ids, params);
    return rows.value().template cast<double>().colwise().mean();
}

const MiningEntry* MiningIndex::find(std::string_view sample_id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), sample_id,
                               [](const MiningEntry& e, std::string_view id) { return e.sample_id < id; });
    return it != entries.end() && it->sample_id == sample_id ? &*it : nullptr;
}

template <typename Real>
MiningIndex build_mining_index(const data::DatasetSplit& split, const data::Vocab& vocab,
                               const model::Backbone<Real>& model, const ParameterStore<Real>& params) {
    if (split.empty()) {
        throw InvalidArgument("build_mining_index: empty split");
    }
    MiningIndex index;
    index.entries.reserve(split.size());
    for (const auto& s : split.samples) {
        const auto tok = data::tokenize_sample(s, vocab);
        MiningEntry e;
        e.sample_id = s.sample_id;
        e.image_ref = s.image_ref;
        e.answer_ids = tok.answer_ids;
        e.e_q = text_embedding(model, tok.question_ids, params);
        e.e_a = text_embedding(model, tok.answer_ids, params);
        index.entries.push_back(std::move(e));
    }
    std::sort(index.entries.begin(), index.entries.end(),
              [](const MiningEntry& a, const MiningEntry& b) { return a.sample_id < b.sample_id; });
    return index;
}

double cosine(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        return 0.0;
    }
    return u.dot(v) / (nu * nv);
}

double mining_score(const MiningEntry& anchor, const MiningEntry& candidate) {
    return cosine(candidate.e_q, anchor.e_q) - cosine(candidate.e_a, anchor.e_a);
}

std::vector<MinedImage> mine_counterfactual_images(const MiningIndex& index, const MiningEntry& anchor, int k) {
    if (k < 1) {
        throw InvalidArgument("mine_counterfactual_images: k must be >= 1");
    }
    std::vector<MinedImage> eligible;
    for (const auto& e : index.entries) {
        if (e.sample_id == anchor.sample_id || e.answer_ids == anchor.answer_ids) {
            continue;
        }
        eligible.push_back({e.sample_id, e.image_ref, mining_score(anchor, e)});
    }
    const auto keep = std::min(eligible.size(), static_cast<std::size_t>(k));
    if (keep < static_cast<std::size_t>(k)) {
        g_shortfall.fetch_add(1, std::memory_order_relaxed);
    }
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(keep), eligible.end(),
                      [](const MinedImage& a, const MinedImage& b) {
                          return a.score > b.score || (a.score == b.score && a.sample_id < b.sample_id);
                      });
    eligible.resize(keep);
    return eligible;
}

std::vector<MinedImage> mine_counterfactual_images(const MiningIndex& index, std::string_view anchor_id, int k) {
    const auto* anchor = index.find(anchor_id);
    if (anchor == nullptr) {
        throw InvalidArgument("anchor '" + std::string(anchor_id) + "' is not in the mining index");
    }
    return mine_counterfactual_images(index, *anchor, k);
}

std::int64_t mining_shortfall_count() {
    return g_shortfall.load(std::memory_order_relaxed);
}

void reset_mining_shortfall_count() {
    g_shortfall.store(0, std::memory_order_relaxed);
}

template <typename Real>
AttributionScores attribution_scores(const model::Backbone<Real>& model, const Matrix<Real>& zv,
                                     const Matrix<Real>& zq, const data::CotSequence& cot,
                                     const ParameterStore<Real>& params, const model::ForwardOptions& options,
                                     double scale) {
    ad::Tape<Real> t;
    const auto v = t.leaf(zv);
    const auto q = t.leaf(zq);
    const auto lp = model.answer_logprob(v, q, cot, params, options);
    t.backward(scale == 1.0 ? lp : ad::scale(lp, static_cast<Real>(scale)));

    auto row_sums = [](const ad::Var<Real>& x) {
        std::vector<double> out(static_cast<std::size_t>(x.rows()), 0.0);
        const auto& g = x.grad();
        if (g.size() == 0) {
            return out;
        }
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            out[static_cast<std::size_t>(r)] = static_cast<double>(g.row(r).sum());
        }
        return out;
    };
    AttributionScores s{row_sums(v), row_sums(q)};
    for (double x : s.object_scores) {
        if (!std::isfinite(x)) {
            throw NumericError("attribution: non-finite object score");
        }
    }
    for (double x : s.word_scores) {
        if (!std::isfinite(x)) {
            throw NumericError("attribution: non-finite word score");
        }
    }
    return s;
}

FactualSplit split_factual_counterfactual(const AttributionScores& scores, int k_ins) {
    if (k_ins < 1) {
        throw InvalidArgument("split_factual_counterfactual: k_ins must be >= 1");
    }
    FactualSplit fs;
    fs.kept_objects = top_k_indices(scores.object_scores, k_ins);
    fs.kept_words = top_k_indices(scores.word_scores, k_ins);
    fs.masked_objects = complement(fs.kept_objects, scores.object_scores.size());
    fs.masked_words = complement(fs.kept_words, scores.word_scores.size());
    return fs;
}

template <typename Real>
Var<Real> masked_view(const Var<Real>& seq, const Var<Real>& mask_row, const std::vector<int>& keep) {
    if (mask_row.rows() != 1 || mask_row.cols() != seq.cols()) {
        throw InvalidArgument("masked_view: mask row must be 1 x d");
    }
    std::vector<Var<Real>> rows;
    rows.reserve(static_cast<std::size_t>(seq.rows()));
    for (Eigen::Index i = 0; i < seq.rows(); ++i) {
        const bool kept = std::find(keep.begin(), keep.end(), static_cast<int>(i)) != keep.end();
        rows.push_back(kept ? ad::slice_rows(seq, i, 1) : mask_row);
    }
    return ad::concat_rows(rows);
}

#define MCLE_MINING_INSTANTIATE(Real)                                                                              \
    template Eigen::RowVectorXd text_embedding<Real>(const model::Backbone<Real>&, std::span<const int>,          \
                                                     const ParameterStore<Real>&);                                 \
    template MiningIndex build_mining_index<Real>(const data::DatasetSplit&, const data::Vocab&,                  \
                                                  const model::Backbone<Real>&, const ParameterStore<Real>&);      \
    template AttributionScores attribution_scores<Real>(const model::Backbone<Real>&, const Matrix<Real>&,        \
                                                        const Matrix<Real>&, const data::CotSequence&,            \
                                                        const ParameterStore<Real>&, const model::ForwardOptions&, \
                                                        double);                                                   \
    template Var<Real> masked_view<Real>(const Var<Real>&, const Var<Real>&, const std::vector<int>&);

MCLE_MINING_INSTANTIATE(float)
MCLE_MINING_INSTANTIATE(double)

} // namespace mcle::mining
