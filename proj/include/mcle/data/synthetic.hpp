// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic toy VQA-with-explanations world: scenes of coloured shapes on
// a small grid, templated questions, and explanations that entail the answer.

#pragma once

#include "mcle/data/dataset.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mcle::data {

struct SyntheticConfig {
    int m = 2;  // object slots per scene
    std::vector<std::string> shapes{"circle", "square"};
    std::vector<std::string> colors{"red", "green", "blue"};
    int grid = 2;  // grid x grid positions
    int max_count = 2;
    double noise_std = 0.05;
    Split split = Split::train;
    std::string id_prefix = "syn";

    // shape one-hot | color one-hot | position one-hot | present flag
    int d_raw() const;
};

enum class QuestionTemplate { exists, color_of, count };
inline constexpr int kTemplateCount = 3;

// Generates n samples. Each template's first occurrences cycle through its
// answer set, so any template drawn at least twice has two distinct answers.
DatasetSplit generate_synthetic(std::uint64_t seed, int n, const SyntheticConfig& config = {});

// Which template produced `question`, if any.
std::optional<QuestionTemplate> classify_question(const std::string& question);

// Rule-based check that a templated explanation logically yields `answer`
// for `question`.
bool explanation_entails_answer(const std::string& question, const std::string& explanation,
                                const std::string& answer);

} // namespace mcle::data
