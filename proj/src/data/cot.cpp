// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/data/cot.hpp"

#include "mcle/data/dataset.hpp"
#include "mcle/data/vocab.hpp"

#include <algorithm>

namespace mcle::data {

namespace {

// First index at which `needle` occurs in `hay` at or after `from`, or -1.
int find_run(std::span<const int> hay, std::span<const int> needle, std::size_t from = 0) {
    if (needle.empty() || hay.size() < needle.size()) {
        return -1;
    }
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
        if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

} // namespace

CotSequence assemble_cot(const TokenizedSample& sample, const Vocab& vocab, int max_text_len, CotOrder order) {
    const auto prefix = vocab.answer_prefix_ids();
    const int fixed = 1 + static_cast<int>(prefix.size()) + static_cast<int>(sample.answer_ids.size()) + 1;
    if (fixed > max_text_len) {
        throw UnrepresentableSample("sample '" + sample.sample_id + "': answer needs " + std::to_string(fixed) +
                                    " tokens, more than max_text_len " + std::to_string(max_text_len));
    }
    const auto expl_len =
        std::min(static_cast<int>(sample.explanation_ids.size()), max_text_len - fixed);
    const auto expl_begin = sample.explanation_ids.begin();
    const auto expl_end = expl_begin + expl_len;

    CotSequence cot;
    cot.order = order;
    auto& ids = cot.ids;
    ids.reserve(static_cast<std::size_t>(fixed + expl_len));

    auto append_explanation = [&] {
        const int begin = static_cast<int>(ids.size());
        ids.push_back(vocab.because_id());
        ids.insert(ids.end(), expl_begin, expl_end);
        return begin;
    };
    auto append_answer = [&] {
        const int begin = static_cast<int>(ids.size());
        ids.insert(ids.end(), prefix.begin(), prefix.end());
        cot.answer_tokens_begin = static_cast<int>(ids.size());
        cot.answer_tokens_count = static_cast<int>(sample.answer_ids.size());
        ids.insert(ids.end(), sample.answer_ids.begin(), sample.answer_ids.end());
        return begin;
    };

    if (order == CotOrder::explain_first) {
        const int e = append_explanation();
        const int a = append_answer();
        ids.push_back(Vocab::kEos);
        cot.explanation = {e, a};
        cot.answer = {a, static_cast<int>(ids.size())};
    } else {
        const int a = append_answer();
        const int e = append_explanation();
        ids.push_back(Vocab::kEos);
        cot.answer = {a, e};
        cot.explanation = {e, static_cast<int>(ids.size())};
    }
    return cot;
}

ParsedGeneration parse_generation(std::span<const int> ids, const Vocab& vocab, CotOrder order) {
    auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
    std::span<const int> body(ids.begin(), eos);
    const auto prefix = vocab.answer_prefix_ids();
    const int because = vocab.because_id();
    const std::span<const int> because_run(&because, 1);

    ParsedGeneration out;
    if (order == CotOrder::explain_first) {
        if (!body.empty() && body.front() == because) {
            body = body.subspan(1);
        }
        const int at = find_run(body, prefix);
        if (at < 0) {
            out.explanation_ids.assign(body.begin(), body.end());
        } else {
            out.explanation_ids.assign(body.begin(), body.begin() + at);
            out.answer_ids.assign(body.begin() + at + static_cast<std::ptrdiff_t>(prefix.size()), body.end());
        }
    } else {
        if (find_run(body, prefix) == 0) {
            body = body.subspan(prefix.size());
        }
        const int at = find_run(body, because_run);
        if (at < 0) {
            out.answer_ids.assign(body.begin(), body.end());
        } else {
            out.answer_ids.assign(body.begin(), body.begin() + at);
            out.explanation_ids.assign(body.begin() + at + 1, body.end());
        }
    }
    return out;
}

} // namespace mcle::data
