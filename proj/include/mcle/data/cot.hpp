// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chain-of-thought target sequences:
//   because <explanation> so the answer is <answer> <eos>
// and the answer-first variant used when chain-of-thought is ablated:
//   so the answer is <answer> because <explanation> <eos>

#pragma once

#include "mcle/common/error.hpp"

#include <span>
#include <vector>

namespace mcle::data {

class Vocab;
struct TokenizedSample;

inline constexpr int kDefaultMaxTextLen = 40;

enum class CotOrder { explain_first, answer_first };

struct TokenSpan {
    int begin = 0;
    int end = 0;  // exclusive
    int size() const { return end - begin; }
    bool operator==(const TokenSpan&) const = default;
};

struct CotSequence {
    std::vector<int> ids;
    // Explanation span starts with the "because" token, the answer span with
    // the "so the answer is" run. The trailing <eos> belongs to whichever span
    // comes last; together the spans cover ids exactly.
    TokenSpan explanation;
    TokenSpan answer;
    CotOrder order = CotOrder::explain_first;
    // Offset of the first answer word inside ids (just past the prefix run).
    int answer_tokens_begin = 0;
    int answer_tokens_count = 0;
};

class UnrepresentableSample : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Explanation tail is truncated to fit max_text_len; the answer never is.
CotSequence assemble_cot(const TokenizedSample& sample, const Vocab& vocab, int max_text_len = kDefaultMaxTextLen,
                         CotOrder order = CotOrder::explain_first);

struct ParsedGeneration {
    std::vector<int> explanation_ids;
    std::vector<int> answer_ids;
    bool operator==(const ParsedGeneration&) const = default;
};

// Splits arbitrary model output on the first complete marker run. Anything
// after the first <eos> is ignored. Never throws.
ParsedGeneration parse_generation(std::span<const int> ids, const Vocab& vocab,
                                  CotOrder order = CotOrder::explain_first);

} // namespace mcle::data
