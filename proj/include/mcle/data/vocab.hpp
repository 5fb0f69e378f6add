// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcle::data {

class DatasetSplit;

// Lowercases and splits on whitespace; every ASCII punctuation character
// becomes its own token.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

// Dense token <-> id map. Ids 0..4 are <pad>, <bos>, <eos>, <mask>, <unk>;
// the chain-of-thought marker words follow, then corpus tokens.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kMask = 3;
    static constexpr int kUnk = 4;

    static constexpr std::string_view kBecauseText = "because";
    static constexpr std::string_view kAnswerPrefixText = "so the answer is";

    // Only the special and marker tokens.
    Vocab();
    // Adds `tokens` (in order) after the reserved ones; duplicates are skipped.
    explicit Vocab(std::span<const std::string> tokens);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool contains(std::string_view token) const;
    int id(std::string_view token) const;  // kUnk when absent
    const std::string& token(int id) const;

    int because_id() const { return because_; }
    std::span<const int> answer_prefix_ids() const { return answer_prefix_; }

    std::vector<int> encode(std::string_view text) const;
    std::vector<int> ids_of(std::span<const std::string> tokens) const;
    std::vector<std::string> decode(std::span<const int> ids) const;
    std::string decode_text(std::span<const int> ids) const;

    // One token per line in id order.
    std::string serialize() const;
    static Vocab deserialize(std::string_view text);

    bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

private:
    void add(const std::string& token);

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
    int because_ = -1;
    std::vector<int> answer_prefix_;
};

// Keeps every token whose frequency over questions, answers and all
// explanations of `splits` is >= min_freq. Tokens are ordered by descending
// frequency, then lexicographically.
Vocab build_vocab(std::span<const DatasetSplit> splits, int min_freq);

} // namespace mcle::data
