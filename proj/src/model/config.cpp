// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/model/config.hpp"

#include "mcle/common/error.hpp"

#include <cstdlib>
#include <string>

namespace mcle::model {

namespace {

void require_positive(int value, const char* name) {
    if (value <= 0) {
        throw ConfigError(std::string("model config: ") + name + " must be positive, got " + std::to_string(value));
    }
}

} // namespace

void ModelConfig::validate() const {
    require_positive(d, "d");
    require_positive(n_layers, "n_layers");
    require_positive(n_heads, "n_heads");
    require_positive(vocab_size, "vocab_size");
    require_positive(m, "m");
    require_positive(max_text_len, "max_text_len");
    require_positive(d_raw, "d_raw");
    require_positive(max_positions, "max_positions");
    require_positive(ffn_mult, "ffn_mult");
    if (d % n_heads != 0) {
        throw ConfigError("model config: d (" + std::to_string(d) + ") is not divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (max_text_len >= max_positions) {
        throw ConfigError("model config: max_positions (" + std::to_string(max_positions) +
                          ") leaves no room for the question next to max_text_len (" +
                          std::to_string(max_text_len) + ")");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d", c.d},
                       {"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"vocab_size", c.vocab_size},
                       {"m", c.m},
                       {"max_text_len", c.max_text_len},
                       {"d_raw", c.d_raw},
                       {"max_positions", c.max_positions},
                       {"ffn_mult", c.ffn_mult},
                       {"positional", c.positional}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("d").get_to(c.d);
    j.at("n_layers").get_to(c.n_layers);
    j.at("n_heads").get_to(c.n_heads);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("m").get_to(c.m);
    j.at("max_text_len").get_to(c.max_text_len);
    j.at("d_raw").get_to(c.d_raw);
    j.at("max_positions").get_to(c.max_positions);
    j.at("ffn_mult").get_to(c.ffn_mult);
    j.at("positional").get_to(c.positional);
}

Precision parse_precision(std::string_view text) {
    if (text == "f32") {
        return Precision::f32;
    }
    if (text == "f64") {
        return Precision::f64;
    }
    throw ConfigError("precision must be f32 or f64, got '" + std::string(text) + "'");
}

std::string_view to_string(Precision p) {
    return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_env(Precision fallback) {
    const char* env = std::getenv("MCLE_PRECISION");
    if (env == nullptr || *env == '\0') {
        return fallback;
    }
    return parse_precision(env);
}

} // namespace mcle::model
