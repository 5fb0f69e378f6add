// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <string_view>

namespace mcle::model {

struct ModelConfig {
    int d = 32;
    int n_layers = 2;
    int n_heads = 2;
    int vocab_size = 0;
    int m = 4;  // image slots
    int max_text_len = 40;
    int d_raw = 12;
    // Upper bound on question + chain-of-thought positions in one forward pass.
    int max_positions = 96;
    int ffn_mult = 4;
    bool positional = true;

    // Throws ConfigError naming the first offending field.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class Precision { f32, f64 };

Precision parse_precision(std::string_view text);
std::string_view to_string(Precision p);
// MCLE_PRECISION, defaulting to `fallback` when unset.
Precision precision_from_env(Precision fallback = Precision::f32);

} // namespace mcle::model
