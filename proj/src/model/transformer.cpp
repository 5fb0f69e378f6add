// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/model/transformer.hpp"

#include "mcle/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace mcle::model {

namespace {

template <typename Real>
Matrix<Real> normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<Real> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<Real>(dist(rng));
    }
    return m;
}

std::string block_name(int layer, const char* leaf) {
    return "bb.L" + std::to_string(layer) + "." + leaf;
}

template <typename Real>
ad::ParamId bind_param(const ParameterStore<Real>& params, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (!params.contains(name)) {
        throw ConfigError("backbone parameter missing: " + name);
    }
    const auto id = params.id_of(name);
    const auto& v = params.at(id).value;
    if (v.rows() != rows || v.cols() != cols) {
        throw ConfigError("backbone parameter " + name + " has shape " + std::to_string(v.rows()) + "x" +
                          std::to_string(v.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    return id;
}

} // namespace

template <typename Real>
void TinyTransformer<Real>::register_parameters(const ModelConfig& c, ParameterStore<Real>& params,
                                                std::mt19937_64& rng) {
    c.validate();
    const int d = c.d;
    const int h = c.d * c.ffn_mult;
    const double resid_scale = 1.0 / std::sqrt(2.0 * c.n_layers);
    auto ones = [](int n) { return Matrix<Real>::Ones(1, n).eval(); };
    auto zeros = [](int n) { return Matrix<Real>::Zero(1, n).eval(); };

    params.add("bb.img.w", normal_matrix<Real>(c.d_raw, d, 1.0 / std::sqrt(c.d_raw), rng));
    params.add("bb.img.b", zeros(d));
    params.add("bb.tok", normal_matrix<Real>(c.vocab_size, d, 0.5, rng));
    for (int l = 0; l < c.n_layers; ++l) {
        params.add(block_name(l, "norm1.g"), ones(d));
        params.add(block_name(l, "wq"), normal_matrix<Real>(d, d, 1.0 / std::sqrt(d), rng));
        params.add(block_name(l, "wk"), normal_matrix<Real>(d, d, 1.0 / std::sqrt(d), rng));
        params.add(block_name(l, "wv"), normal_matrix<Real>(d, d, 1.0 / std::sqrt(d), rng));
        params.add(block_name(l, "wo"), normal_matrix<Real>(d, d, resid_scale / std::sqrt(d), rng));
        params.add(block_name(l, "bo"), zeros(d));
        params.add(block_name(l, "norm2.g"), ones(d));
        params.add(block_name(l, "w1"), normal_matrix<Real>(d, h, 1.0 / std::sqrt(d), rng));
        params.add(block_name(l, "b1"), zeros(h));
        params.add(block_name(l, "w2"), normal_matrix<Real>(h, d, resid_scale / std::sqrt(h), rng));
        params.add(block_name(l, "b2"), zeros(d));
    }
    params.add("bb.normf.g", ones(d));
    params.add("bb.head.w", normal_matrix<Real>(d, c.vocab_size, 1.0 / std::sqrt(d), rng));
    params.add("bb.head.b", zeros(c.vocab_size));
}

template <typename Real>
TinyTransformer<Real>::TinyTransformer(ModelConfig config, const ParameterStore<Real>& params)
    : config_(std::move(config)) {
    config_.validate();
    const int d = config_.d;
    const int h = d * config_.ffn_mult;
    const int v = config_.vocab_size;
    img_w_ = bind_param(params, "bb.img.w", config_.d_raw, d);
    img_b_ = bind_param(params, "bb.img.b", 1, d);
    tok_emb_ = bind_param(params, "bb.tok", v, d);
    for (int l = 0; l < config_.n_layers; ++l) {
        Block b{};
        b.norm1_g = bind_param(params, block_name(l, "norm1.g"), 1, d);
        b.wq = bind_param(params, block_name(l, "wq"), d, d);
        b.wk = bind_param(params, block_name(l, "wk"), d, d);
        b.wv = bind_param(params, block_name(l, "wv"), d, d);
        b.wo = bind_param(params, block_name(l, "wo"), d, d);
        b.bo = bind_param(params, block_name(l, "bo"), 1, d);
        b.norm2_g = bind_param(params, block_name(l, "norm2.g"), 1, d);
        b.w1 = bind_param(params, block_name(l, "w1"), d, h);
        b.b1 = bind_param(params, block_name(l, "b1"), 1, h);
        b.w2 = bind_param(params, block_name(l, "w2"), h, d);
        b.b2 = bind_param(params, block_name(l, "b2"), 1, d);
        blocks_.push_back(b);
    }
    normf_g_ = bind_param(params, "bb.normf.g", 1, d);
    head_w_ = bind_param(params, "bb.head.w", d, v);
    head_b_ = bind_param(params, "bb.head.b", 1, v);
}

template <typename Real>
Var<Real> TinyTransformer<Real>::encode_image(const Var<Real>& raw, const ParameterStore<Real>& params) const {
    if (raw.rows() != config_.m || raw.cols() != config_.d_raw) {
        throw ConfigError("encode_image: expected " + std::to_string(config_.m) + "x" +
                          std::to_string(config_.d_raw) + " features, got " + std::to_string(raw.rows()) + "x" +
                          std::to_string(raw.cols()));
    }
    auto& t = *raw.tape();
    return ad::add_row(ad::matmul(raw, t.param(params, img_w_)), t.param(params, img_b_));
}

template <typename Real>
Var<Real> TinyTransformer<Real>::word_embeddings(Tape<Real>& tape, std::span<const int> ids,
                                                 const ParameterStore<Real>& params) const {
    if (ids.empty()) {
        throw InvalidArgument("word_embeddings: empty id sequence");
    }
    for (int id : ids) {
        if (id < 0 || id >= config_.vocab_size) {
            throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(config_.vocab_size));
        }
    }
    return ad::gather_rows(tape.param(params, tok_emb_), ids);
}

template <typename Real>
Matrix<Real> TinyTransformer<Real>::positions(int offset, int count) const {
    Matrix<Real> pe = Matrix<Real>::Zero(count, config_.d);
    if (!config_.positional) {
        return pe;
    }
    for (int p = 0; p < count; ++p) {
        const double pos = offset + p;
        for (int i = 0; i < config_.d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / config_.d);
            pe(p, i) = static_cast<Real>(std::sin(pos * freq));
            if (i + 1 < config_.d) {
                pe(p, i + 1) = static_cast<Real>(std::cos(pos * freq));
            }
        }
    }
    return pe;
}

template <typename Real>
void TinyTransformer<Real>::check_capacity(int text_positions) const {
    if (text_positions > config_.max_positions) {
        throw ConfigError("sequence needs " + std::to_string(text_positions) +
                          " text positions, above the backbone limit max_positions=" +
                          std::to_string(config_.max_positions));
    }
}

template <typename Real>
Var<Real> TinyTransformer<Real>::embed_text(Tape<Real>& tape, std::span<const int> ids,
                                            const ParameterStore<Real>& params, int position_offset) const {
    check_capacity(position_offset + static_cast<int>(ids.size()));
    auto emb = word_embeddings(tape, ids, params);
    return ad::add(emb, tape.constant(positions(position_offset, static_cast<int>(ids.size()))));
}

template <typename Real>
Var<Real> TinyTransformer<Real>::attention(const Var<Real>& x, const Block& blk, std::span<const std::uint8_t> allowed,
                                           const ParameterStore<Real>& params) const {
    auto& t = *x.tape();
    const auto q = ad::matmul(x, t.param(params, blk.wq));
    const auto k = ad::matmul(x, t.param(params, blk.wk));
    const auto v = ad::matmul(x, t.param(params, blk.wv));
    const int dh = config_.d / config_.n_heads;
    const Real inv_sqrt = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Var<Real>> heads;
    heads.reserve(static_cast<std::size_t>(config_.n_heads));
    for (int h = 0; h < config_.n_heads; ++h) {
        const auto qh = ad::slice_cols(q, h * dh, dh);
        const auto kh = ad::slice_cols(k, h * dh, dh);
        const auto vh = ad::slice_cols(v, h * dh, dh);
        const auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
        heads.push_back(ad::matmul(ad::softmax_rows(scores, allowed), vh));
    }
    const auto merged = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
    return ad::add_row(ad::matmul(merged, t.param(params, blk.wo)), t.param(params, blk.bo));
}

template <typename Real>
Var<Real> TinyTransformer<Real>::run_blocks(Var<Real> x, int n_prefix, const ParameterStore<Real>& params,
                                            const ForwardOptions& options) const {
    auto& t = *x.tape();
    const auto rows = static_cast<int>(x.rows());
    const int m = config_.m;
    if (!options.image_slot_visible.empty() && static_cast<int>(options.image_slot_visible.size()) != m) {
        throw InvalidArgument("image_slot_visible must have one entry per image slot");
    }
    std::vector<std::uint8_t> allowed(static_cast<std::size_t>(rows) * static_cast<std::size_t>(rows), 0);
    for (int r = 0; r < rows; ++r) {
        const int limit = r < n_prefix ? n_prefix : r + 1;
        for (int c = 0; c < limit; ++c) {
            const bool hidden = c < m && !options.image_slot_visible.empty() && options.image_slot_visible[c] == 0;
            allowed[static_cast<std::size_t>(r * rows + c)] = hidden ? 0 : 1;
        }
    }
    for (const auto& blk : blocks_) {
        const auto h1 = ad::rms_norm_rows(x, t.param(params, blk.norm1_g));
        x = ad::add(x, attention(h1, blk, allowed, params));
        const auto h2 = ad::rms_norm_rows(x, t.param(params, blk.norm2_g));
        const auto ff = ad::gelu(ad::add_row(ad::matmul(h2, t.param(params, blk.w1)), t.param(params, blk.b1)));
        x = ad::add(x, ad::add_row(ad::matmul(ff, t.param(params, blk.w2)), t.param(params, blk.b2)));
    }
    return ad::rms_norm_rows(x, t.param(params, normf_g_));
}

template <typename Real>
Var<Real> TinyTransformer<Real>::logits(const Var<Real>& hidden, const ParameterStore<Real>& params) const {
    auto& t = *hidden.tape();
    return ad::add_row(ad::matmul(hidden, t.param(params, head_w_)), t.param(params, head_b_));
}

template <typename Real>
DecoderOutputs<Real> TinyTransformer<Real>::forward_cot(const Var<Real>& zv, const Var<Real>& zq,
                                                        const data::CotSequence& cot,
                                                        const ParameterStore<Real>& params,
                                                        const ForwardOptions& options) const {
    if (zv.rows() != config_.m || zv.cols() != config_.d) {
        throw ConfigError("forward_cot: Z_V must be " + std::to_string(config_.m) + "x" + std::to_string(config_.d));
    }
    if (zq.rows() < 1 || zq.cols() != config_.d) {
        throw ConfigError("forward_cot: Z_Q must have at least one row of width " + std::to_string(config_.d));
    }
    if (cot.ids.empty()) {
        throw InvalidArgument("forward_cot: empty COT sequence");
    }
    const int m = config_.m;
    const auto n = static_cast<int>(zq.rows());
    const auto len = static_cast<int>(cot.ids.size());
    auto& t = *zv.tape();

    DecoderOutputs<Real> out;
    out.explanation = cot.explanation;
    out.answer = cot.answer;
    out.cot_embeddings = embed_text(t, cot.ids, params, n);
    const auto h = run_blocks(ad::concat_rows({zv, zq, out.cot_embeddings}), m + n, params, options);
    out.token_logprobs = ad::log_softmax_rows(logits(ad::slice_rows(h, m + n - 1, len), params));
    out.hidden = ad::slice_rows(h, m + n, len);
    if (cot.explanation.size() > 0) {
        out.hidden_expl = ad::slice_rows(out.hidden, cot.explanation.begin, cot.explanation.size());
    }
    if (cot.answer.size() > 0) {
        out.hidden_ans = ad::slice_rows(out.hidden, cot.answer.begin, cot.answer.size());
    }
    return out;
}

template <typename Real>
Var<Real> TinyTransformer<Real>::answer_logprob(const Var<Real>& zv, const Var<Real>& zq,
                                                const data::CotSequence& cot, const ParameterStore<Real>& params,
                                                const ForwardOptions& options) const {
    if (cot.answer_tokens_count <= 0) {
        throw InvalidArgument("answer_logprob: empty answer");
    }
    const auto out = forward_cot(zv, zq, cot, params, options);
    std::vector<Eigen::Index> rows;
    std::vector<Eigen::Index> cols;
    for (int i = 0; i < cot.answer_tokens_count; ++i) {
        const int pos = cot.answer_tokens_begin + i;
        rows.push_back(pos);
        cols.push_back(cot.ids[static_cast<std::size_t>(pos)]);
    }
    return ad::sum(ad::pick(out.token_logprobs, rows, cols));
}

template <typename Real>
Matrix<Real> TinyTransformer<Real>::next_token_logprobs(const Matrix<Real>& zv, const Matrix<Real>& zq,
                                                        std::span<const int> prefix_ids,
                                                        const ParameterStore<Real>& params) const {
    Tape<Real> t(false);
    const auto n = static_cast<int>(zq.rows());
    const int m = config_.m;
    auto zt = embed_text(t, prefix_ids, params, n);
    const auto h = run_blocks(ad::concat_rows({t.constant(zv), t.constant(zq), zt}), m + n, params, {});
    const auto last = ad::slice_rows(h, h.rows() - 1, 1);
    return ad::log_softmax_rows(logits(last, params)).value();
}

namespace {

// Highest-scoring token; the lowest id wins ties.
template <typename Real>
int argmax_token(const Matrix<Real>& row) {
    int best = 0;
    for (Eigen::Index c = 1; c < row.cols(); ++c) {
        if (row(0, c) > row(0, best)) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

} // namespace

template <typename Real>
std::vector<int> TinyTransformer<Real>::generate(const Matrix<Real>& zv, const Matrix<Real>& zq,
                                                 const ParameterStore<Real>& params,
                                                 const DecodeConfig& decode) const {
    if (decode.start_ids.empty()) {
        throw InvalidArgument("generate: start_ids must be nonempty");
    }
    if (decode.max_len > config_.max_text_len) {
        throw InvalidArgument("generate: max_len " + std::to_string(decode.max_len) + " exceeds max_text_len " +
                              std::to_string(config_.max_text_len));
    }
    if (decode.beam_width < 1) {
        throw InvalidArgument("generate: beam_width must be >= 1");
    }
    const auto max_len = static_cast<std::size_t>(decode.max_len);

    if (decode.strategy == DecodeConfig::Strategy::greedy) {
        std::vector<int> seq = decode.start_ids;
        while (seq.size() < max_len && seq.back() != decode.eos_id) {
            seq.push_back(argmax_token<Real>(next_token_logprobs(zv, zq, seq, params)));
        }
        return seq;
    }

    struct Hyp {
        std::vector<int> seq;
        double score = 0.0;
        bool done = false;
    };
    // Higher score first; equal scores fall back to the lexicographically
    // smaller sequence so decoding is deterministic.
    auto better = [](const Hyp& a, const Hyp& b) {
        return std::tie(b.score, a.seq) < std::tie(a.score, b.seq);
    };
    const auto width = static_cast<std::size_t>(decode.beam_width);
    std::vector<Hyp> beam{{decode.start_ids, 0.0, decode.start_ids.back() == decode.eos_id}};
    while (true) {
        bool expanded = false;
        std::vector<Hyp> candidates;
        for (const auto& hyp : beam) {
            if (hyp.done || hyp.seq.size() >= max_len) {
                candidates.push_back({hyp.seq, hyp.score, true});
                continue;
            }
            expanded = true;
            const auto lp = next_token_logprobs(zv, zq, hyp.seq, params);
            std::vector<int> order(static_cast<std::size_t>(lp.cols()));
            std::iota(order.begin(), order.end(), 0);
            const auto keep = std::min(width, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                              [&](int a, int b) { return lp(0, a) > lp(0, b) || (lp(0, a) == lp(0, b) && a < b); });
            for (std::size_t i = 0; i < keep; ++i) {
                Hyp next{hyp.seq, hyp.score + static_cast<double>(lp(0, order[i])), false};
                next.seq.push_back(order[i]);
                next.done = order[i] == decode.eos_id;
                candidates.push_back(std::move(next));
            }
        }
        if (!expanded) {
            break;
        }
        std::sort(candidates.begin(), candidates.end(), better);
        candidates.resize(std::min(width, candidates.size()));
        beam = std::move(candidates);
    }
    return std::min_element(beam.begin(), beam.end(), better)->seq;
}

template class TinyTransformer<float>;
template class TinyTransformer<double>;

} // namespace mcle::model
