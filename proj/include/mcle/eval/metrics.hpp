// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Explanation metrics (corpus BLEU-4, ROUGE-L, CIDEr-D), answer accuracy
// and the filtered/unfiltered evaluation of a predictions file.

#pragma once

#include "mcle/data/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcle::eval {

using Tokens = std::vector<std::string>;
using References = std::vector<Tokens>;

// Lowercased words with punctuation removed.
Tokens metric_tokens(std::string_view text);

// Corpus BLEU, uniform 1..4-gram weights, brevity penalty against the
// closest reference length (shorter wins a tie).
double bleu4(std::span<const Tokens> candidates, std::span<const References> references);

// Per sample: LCS precision and recall, each maximised over the references,
// combined as an F-measure with beta = 1.2.
std::vector<double> rouge_l_scores(std::span<const Tokens> candidates, std::span<const References> references);
double rouge_l(std::span<const Tokens> candidates, std::span<const References> references);

// CIDEr-D (n = 1..4, sigma = 6, clipped tf-idf, x10) with document
// frequencies taken from the references of this corpus.
std::vector<double> cider_d_scores(std::span<const Tokens> candidates, std::span<const References> references);
double cider_d(std::span<const Tokens> candidates, std::span<const References> references);

enum class AnswerMatch { normalized, exact };

// Lowercase, punctuation stripped, leading articles removed, whitespace
// collapsed.
std::string normalize_answer(std::string_view answer);
bool answers_match(std::string_view predicted, std::string_view gold, AnswerMatch match = AnswerMatch::normalized);

struct PredictionRecord {
    std::string sample_id;
    std::string explanation;
    std::string answer;

    bool operator==(const PredictionRecord&) const = default;
};

double answer_accuracy(std::span<const PredictionRecord> preds, const data::DatasetSplit& split,
                       AnswerMatch match = AnswerMatch::normalized);

enum class Mode { unfiltered, filtered };
Mode parse_mode(std::string_view s);
std::string_view to_string(Mode m);

struct MetricReport {
    // Undefined (null in JSON) when no explanation was evaluated.
    std::optional<double> bleu4;
    std::optional<double> rouge_l;
    std::optional<double> cider;
    double accuracy = 0;
    Mode mode = Mode::unfiltered;
    int n_evaluated = 0;
    int n_predictions = 0;

    bool operator==(const MetricReport&) const = default;
};

// preds must hold exactly one record per sample of `split`.
MetricReport evaluate_split(std::span<const PredictionRecord> preds, const data::DatasetSplit& split, Mode mode,
                            AnswerMatch match = AnswerMatch::normalized);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

// JSON lines {"sample_id", "explanation", "answer"}.
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

} // namespace mcle::eval
