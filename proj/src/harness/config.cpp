// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/harness/config.hpp"

#include "mcle/common/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mcle::harness {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
    Int out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(std::string(key) + ": '" + std::string(v) + "' is not an integer");
    }
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    const std::string s(v);
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) {
        throw ConfigError(std::string(key) + ": '" + s + "' is not a number");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError(std::string(key) + ": '" + std::string(v) + "' is not a boolean");
}

std::string fmt_real(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

using K = ConfigField::Kind;

#define MCLE_INT_FIELD(f)                                                                                        \
    ConfigField {                                                                                                \
        #f, K::integer, [](RunConfig& c, std::string_view v) { c.f = parse_int<decltype(c.f)>(#f, v); },         \
            [](const RunConfig& c) { return std::to_string(c.f); }                                               \
    }
#define MCLE_REAL_FIELD(f)                                                                                       \
    ConfigField {                                                                                                \
        #f, K::real, [](RunConfig& c, std::string_view v) { c.f = parse_real(#f, v); },                          \
            [](const RunConfig& c) { return fmt_real(c.f); }                                                     \
    }
#define MCLE_BOOL_FIELD(f)                                                                                       \
    ConfigField {                                                                                                \
        #f, K::boolean, [](RunConfig& c, std::string_view v) { c.f = parse_bool(#f, v); },                       \
            [](const RunConfig& c) { return std::string(c.f ? "true" : "false"); }                               \
    }
#define MCLE_TEXT_FIELD(f)                                                                                       \
    ConfigField {                                                                                                \
        #f, K::text, [](RunConfig& c, std::string_view v) { c.f = std::string(v); },                             \
            [](const RunConfig& c) { return c.f; }                                                               \
    }

} // namespace

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields{
        MCLE_INT_FIELD(d),           MCLE_INT_FIELD(n_layers),         MCLE_INT_FIELD(n_heads),
        MCLE_INT_FIELD(ffn_mult),    MCLE_INT_FIELD(max_positions),    MCLE_BOOL_FIELD(positional),
        MCLE_REAL_FIELD(alpha),      MCLE_REAL_FIELD(beta),            MCLE_REAL_FIELD(gamma),
        MCLE_REAL_FIELD(tau_init),   MCLE_INT_FIELD(k_sem),            MCLE_INT_FIELD(k_img),
        MCLE_INT_FIELD(k_ins),       MCLE_BOOL_FIELD(no_cot),          MCLE_BOOL_FIELD(no_semantic),
        MCLE_BOOL_FIELD(no_image),   MCLE_BOOL_FIELD(no_instance),     MCLE_BOOL_FIELD(no_all),
        MCLE_INT_FIELD(batch_size),  MCLE_INT_FIELD(epochs),           MCLE_INT_FIELD(max_text_len),
        MCLE_INT_FIELD(seed),        MCLE_REAL_FIELD(lr),              MCLE_TEXT_FIELD(lr_schedule),
        MCLE_REAL_FIELD(clip_norm),
        MCLE_REAL_FIELD(weight_decay), MCLE_TEXT_FIELD(train_path),    MCLE_TEXT_FIELD(test_path),
        MCLE_TEXT_FIELD(dataset_format), MCLE_TEXT_FIELD(feature_dir), MCLE_INT_FIELD(data_seed),
        MCLE_INT_FIELD(synthetic_train),
        MCLE_INT_FIELD(synthetic_test), MCLE_INT_FIELD(min_freq),      MCLE_TEXT_FIELD(answer_match),
        MCLE_TEXT_FIELD(decode),     MCLE_INT_FIELD(beam_width),       MCLE_TEXT_FIELD(out_dir),
    };
    return fields;
}

void set_field(RunConfig& config, std::string_view key, std::string_view value) {
    for (const auto& f : config_fields()) {
        if (f.name == key) {
            f.set(config, trim(value));
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        try {
            set_field(base, trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return parse_config_text(s.str(), std::move(base));
}

std::string to_config_text(const RunConfig& config) {
    std::string out;
    for (const auto& f : config_fields()) {
        out += f.name + " = " + f.get(config) + "\n";
    }
    return out;
}

nlohmann::json to_json(const RunConfig& config) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : config_fields()) {
        j[f.name] = f.get(config);
    }
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    for (const auto& [k, v] : j.items()) {
        set_field(c, k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    return c;
}

void RunConfig::finalize() {
    if (no_all) {
        no_semantic = no_image = no_instance = true;
    }
    auto positive = [](bool ok, const char* what) {
        if (!ok) {
            throw ConfigError(std::string(what) + " must be positive");
        }
    };
    positive(d > 0 && n_layers > 0 && n_heads > 0 && ffn_mult > 0 && max_positions > 0, "model sizes");
    positive(tau_init > 0 && std::isfinite(tau_init), "tau_init");
    positive(k_sem > 0 && k_img > 0 && k_ins > 0, "top_k");
    positive(batch_size > 0, "batch_size");
    positive(epochs > 0, "epochs");
    positive(max_text_len > 0, "max_text_len");
    positive(lr > 0 && std::isfinite(lr), "lr");
    positive(clip_norm > 0, "clip_norm");
    positive(synthetic_train > 0 && synthetic_test > 0, "synthetic sizes");
    positive(min_freq > 0, "min_freq");
    positive(beam_width > 0, "beam_width");
    if (weight_decay < 0) {
        throw ConfigError("weight_decay must be non-negative");
    }
    objective_config().weights.validate();
    (void)answer_match_mode();
    if (lr_schedule != "constant" && lr_schedule != "cosine") {
        throw ConfigError("lr_schedule must be constant or cosine");
    }
    if (decode != "greedy" && decode != "beam") {
        throw ConfigError("decode must be greedy or beam");
    }
    (void)data::parse_format(dataset_format);
}

objectives::ObjectiveConfig RunConfig::objective_config() const {
    objectives::ObjectiveConfig c;
    c.weights = {alpha, beta, gamma};
    c.top_k = {k_sem, k_img, k_ins};
    c.levels = {!(no_semantic || no_all), !(no_image || no_all), !(no_instance || no_all)};
    c.order = cot_order();
    c.max_text_len = max_text_len;
    return c;
}

model::ModelConfig RunConfig::model_config(int vocab_size, int m, int d_raw) const {
    model::ModelConfig c;
    c.d = d;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.vocab_size = vocab_size;
    c.m = m;
    c.max_text_len = max_text_len;
    c.d_raw = d_raw;
    c.max_positions = max_positions;
    c.ffn_mult = ffn_mult;
    c.positional = positional;
    c.validate();
    return c;
}

model::DecodeConfig RunConfig::decode_config(int eos_id) const {
    model::DecodeConfig c;
    c.eos_id = eos_id;
    c.max_len = max_text_len;
    c.strategy = decode == "beam" ? model::DecodeConfig::Strategy::beam : model::DecodeConfig::Strategy::greedy;
    c.beam_width = decode == "beam" ? beam_width : 1;
    return c;
}

eval::AnswerMatch RunConfig::answer_match_mode() const {
    if (answer_match == "normalized") {
        return eval::AnswerMatch::normalized;
    }
    if (answer_match == "exact") {
        return eval::AnswerMatch::exact;
    }
    throw ConfigError("answer_match must be normalized or exact");
}

double RunConfig::lr_at(std::int64_t step, std::int64_t total_steps) const {
    if (lr_schedule == "constant" || total_steps <= 0) {
        return lr;
    }
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * progress));
}

} // namespace mcle::harness
