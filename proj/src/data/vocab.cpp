// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/data/vocab.hpp"

#include "mcle/common/error.hpp"
#include "mcle/data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace mcle::data {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    };
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i != 0) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

Vocab::Vocab() {
    for (const char* special : {"<pad>", "<bos>", "<eos>", "<mask>", "<unk>"}) {
        add(special);
    }
    add(std::string(kBecauseText));
    because_ = id(kBecauseText);
    for (const auto& word : tokenize(kAnswerPrefixText)) {
        add(word);
        answer_prefix_.push_back(id(word));
    }
}

Vocab::Vocab(std::span<const std::string> tokens) : Vocab() {
    for (const auto& t : tokens) {
        add(t);
    }
}

void Vocab::add(const std::string& token) {
    if (token_to_id_.count(token) != 0) {
        return;
    }
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

bool Vocab::contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) != 0;
}

int Vocab::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) {
        throw InvalidArgument("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
    return ids_of(tokenize(text));
}

std::vector<int> Vocab::ids_of(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        ids.push_back(id(t));
    }
    return ids;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) {
        out.push_back(token(i));
    }
    return out;
}

std::string Vocab::decode_text(std::span<const int> ids) const {
    const auto tokens = decode(ids);
    return join_tokens(tokens);
}

std::string Vocab::serialize() const {
    std::string out;
    for (const auto& t : id_to_token_) {
        out += t;
        out.push_back('\n');
    }
    return out;
}

Vocab Vocab::deserialize(std::string_view text) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    Vocab reserved;
    if (lines.size() < static_cast<std::size_t>(reserved.size()) ||
        !std::equal(reserved.id_to_token_.begin(), reserved.id_to_token_.end(), lines.begin())) {
        throw ParseError("serialized vocabulary does not start with the reserved tokens");
    }
    Vocab v(std::span<const std::string>(lines).subspan(static_cast<std::size_t>(reserved.size())));
    if (static_cast<std::size_t>(v.size()) != lines.size()) {
        throw ParseError("serialized vocabulary contains duplicate tokens");
    }
    return v;
}

Vocab build_vocab(std::span<const DatasetSplit> splits, int min_freq) {
    if (min_freq < 1) {
        throw InvalidArgument("min_freq must be >= 1");
    }
    if (splits.empty()) {
        throw InvalidArgument("build_vocab needs at least one split");
    }
    std::map<std::string, long> freq;
    auto count = [&](const std::string& text) {
        for (auto& t : tokenize(text)) {
            ++freq[t];
        }
    };
    for (const auto& split : splits) {
        for (const auto& s : split.samples) {
            count(s.question);
            count(s.answer);
            for (const auto& e : s.explanations) {
                count(e);
            }
        }
    }
    if (freq.empty()) {
        throw InvalidArgument("build_vocab: corpus has no tokens");
    }
    std::vector<std::pair<std::string, long>> kept;
    for (auto& [tok, n] : freq) {
        if (n >= min_freq) {
            kept.emplace_back(tok, n);
        }
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) {
        tokens.push_back(tok);
    }
    return Vocab(tokens);
}

} // namespace mcle::data
