// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. On disk it is flat "key = value" text, one field per
// line, '#' starting a comment; every key is also a CLI flag of the same
// name.

#pragma once

#include "mcle/eval/metrics.hpp"
#include "mcle/model/config.hpp"
#include "mcle/model/backbone.hpp"
#include "mcle/objectives/objectives.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace mcle::harness {

struct RunConfig {
    // backbone
    int d = 32;
    int n_layers = 2;
    int n_heads = 2;
    int ffn_mult = 4;
    int max_positions = 96;
    bool positional = true;

    // objective
    double alpha = 0.1;
    double beta = 0.2;
    double gamma = 0.2;
    double tau_init = 0.2;
    int k_sem = 3;
    int k_img = 3;
    int k_ins = 2;
    bool no_cot = false;
    bool no_semantic = false;
    bool no_image = false;
    bool no_instance = false;
    bool no_all = false;

    // schedule and optimiser
    int batch_size = 16;
    int epochs = 30;
    int max_text_len = 40;
    std::uint64_t seed = 0;
    double lr = 3e-3;
    // constant or cosine (decays to 0 over the planned steps)
    std::string lr_schedule = "cosine";
    double clip_norm = 1.0;
    double weight_decay = 0.01;

    // data; the synthetic world is used when train_path is empty
    std::string train_path;
    std::string test_path;
    std::string dataset_format = "synthetic_json";
    std::string feature_dir;
    std::uint64_t data_seed = 7;
    int synthetic_train = 500;
    int synthetic_test = 100;
    int min_freq = 1;

    // evaluation
    std::string answer_match = "normalized";
    std::string decode = "greedy";
    int beam_width = 3;

    std::string out_dir = "runs/default";

    // no_all switches the three level flags on; then checks ranges.
    void finalize();

    objectives::ObjectiveConfig objective_config() const;
    model::ModelConfig model_config(int vocab_size, int m, int d_raw) const;
    model::DecodeConfig decode_config(int eos_id) const;
    data::CotOrder cot_order() const { return no_cot ? data::CotOrder::answer_first : data::CotOrder::explain_first; }
    eval::AnswerMatch answer_match_mode() const;
    // Learning rate for the 0-based global `step` of a run that takes
    // `total_steps` steps.
    double lr_at(std::int64_t step, std::int64_t total_steps) const;
};

struct ConfigField {
    std::string name;
    enum class Kind { integer, real, boolean, text } kind;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

// Throws ConfigError for unknown keys and values that do not parse as the
// field's type.
void set_field(RunConfig& config, std::string_view key, std::string_view value);
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});
std::string to_config_text(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

} // namespace mcle::harness
