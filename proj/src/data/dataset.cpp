// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/data/dataset.hpp"

#include "mcle/common/error.hpp"
#include "mcle/data/vocab.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace mcle::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split split) {
    switch (split) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    if (text == "train") {
        return Split::train;
    }
    if (text == "val") {
        return Split::val;
    }
    if (text == "test") {
        return Split::test;
    }
    throw InvalidArgument("unknown split '" + std::string(text) + "'");
}

DatasetFormat parse_format(std::string_view text) {
    if (text == "vqax_json") {
        return DatasetFormat::vqax_json;
    }
    if (text == "aokvqa_json") {
        return DatasetFormat::aokvqa_json;
    }
    if (text == "synthetic_json") {
        return DatasetFormat::synthetic_json;
    }
    throw InvalidArgument("unknown dataset format '" + std::string(text) + "'");
}

std::string_view to_string(DatasetFormat format) {
    switch (format) {
    case DatasetFormat::vqax_json:
        return "vqax_json";
    case DatasetFormat::aokvqa_json:
        return "aokvqa_json";
    case DatasetFormat::synthetic_json:
        return "synthetic_json";
    }
    return "synthetic_json";
}

const RawSample* DatasetSplit::find(std::string_view sample_id) const {
    auto it = std::lower_bound(samples.begin(), samples.end(), sample_id,
                               [](const RawSample& s, std::string_view id) { return s.sample_id < id; });
    if (it != samples.end() && it->sample_id == sample_id) {
        return &*it;
    }
    // not sorted (hand-built split): fall back to a scan
    for (const auto& s : samples) {
        if (s.sample_id == sample_id) {
            return &s;
        }
    }
    return nullptr;
}

const FeatureMatrix& DatasetSplit::features(const std::string& image_ref) const {
    auto it = feature_store.find(image_ref);
    if (it == feature_store.end()) {
        throw IngestionError("no features for image_ref '" + image_ref + "'");
    }
    return it->second;
}

namespace {

std::string record_label(std::size_t index, const json& rec) {
    std::string label = "record " + std::to_string(index);
    if (rec.is_object() && rec.contains("sample_id") && rec["sample_id"].is_string()) {
        label += " (sample_id '" + rec["sample_id"].get<std::string>() + "')";
    }
    return label;
}

std::string require_string(const json& rec, const char* field, const std::string& label) {
    if (!rec.contains(field)) {
        throw ParseError(label + ": missing field '" + field + "'");
    }
    if (!rec[field].is_string()) {
        throw ParseError(label + ": field '" + field + "' is not a string");
    }
    return rec[field].get<std::string>();
}

std::string json_scalar_to_string(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<long long>());
    }
    return v.dump();
}

RawSample parse_flat_record(const json& rec, std::size_t index, Split default_split) {
    const auto label = record_label(index, rec);
    if (!rec.is_object()) {
        throw ParseError(label + ": not a JSON object");
    }
    RawSample s;
    s.sample_id = require_string(rec, "sample_id", label);
    s.image_ref = require_string(rec, "image_ref", label);
    s.question = require_string(rec, "question", label);
    s.answer = require_string(rec, "answer", label);
    if (!rec.contains("explanations")) {
        throw ParseError(label + ": missing field 'explanations'");
    }
    if (!rec["explanations"].is_array()) {
        throw ParseError(label + ": field 'explanations' is not an array");
    }
    for (const auto& e : rec["explanations"]) {
        if (!e.is_string()) {
            throw ParseError(label + ": explanation entries must be strings");
        }
        s.explanations.push_back(e.get<std::string>());
    }
    s.split = default_split;
    if (rec.contains("split")) {
        if (!rec["split"].is_string()) {
            throw ParseError(label + ": field 'split' is not a string");
        }
        try {
            s.split = parse_split(rec["split"].get<std::string>());
        } catch (const InvalidArgument& e) {
            throw ParseError(label + ": " + e.what());
        }
    }
    return s;
}

std::string most_common(const std::vector<std::string>& values) {
    std::vector<std::pair<std::string, int>> counts;
    for (const auto& v : values) {
        auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == v; });
        if (it == counts.end()) {
            counts.emplace_back(v, 1);
        } else {
            ++it->second;
        }
    }
    // first-seen wins ties
    auto best = std::max_element(counts.begin(), counts.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    return best == counts.end() ? std::string{} : best->first;
}

// Published VQA-X layout: {"<qid>": {"question", "answers": [{"answer"}...],
// "image_name", "explanation": [...]}, ...}
RawSample parse_vqax_record(const std::string& key, const json& rec, std::size_t index, Split default_split) {
    const auto label = "record " + std::to_string(index) + " (sample_id '" + key + "')";
    if (!rec.is_object()) {
        throw ParseError(label + ": not a JSON object");
    }
    RawSample s;
    s.sample_id = key;
    s.question = require_string(rec, "question", label);
    if (rec.contains("image_name")) {
        s.image_ref = require_string(rec, "image_name", label);
    } else if (rec.contains("image_id")) {
        s.image_ref = json_scalar_to_string(rec["image_id"]);
    } else {
        throw ParseError(label + ": missing field 'image_name'");
    }
    if (rec.contains("multiple_choice_answer") && rec["multiple_choice_answer"].is_string()) {
        s.answer = rec["multiple_choice_answer"].get<std::string>();
    } else if (rec.contains("answers") && rec["answers"].is_array() && !rec["answers"].empty()) {
        std::vector<std::string> answers;
        for (const auto& a : rec["answers"]) {
            if (a.is_object() && a.contains("answer") && a["answer"].is_string()) {
                answers.push_back(a["answer"].get<std::string>());
            } else if (a.is_string()) {
                answers.push_back(a.get<std::string>());
            }
        }
        s.answer = most_common(answers);
    }
    if (s.answer.empty()) {
        throw ParseError(label + ": missing field 'answer'");
    }
    if (!rec.contains("explanation") || !rec["explanation"].is_array()) {
        throw ParseError(label + ": missing field 'explanation'");
    }
    for (const auto& e : rec["explanation"]) {
        if (e.is_string()) {
            s.explanations.push_back(e.get<std::string>());
        }
    }
    s.split = default_split;
    return s;
}

// Published A-OKVQA layout: [{"question_id", "image_id", "question",
// "choices", "correct_choice_idx", "direct_answers", "rationales"}, ...]
RawSample parse_aokvqa_record(const json& rec, std::size_t index, Split default_split) {
    std::string label = "record " + std::to_string(index);
    if (!rec.is_object()) {
        throw ParseError(label + ": not a JSON object");
    }
    if (rec.contains("question_id")) {
        label += " (sample_id '" + json_scalar_to_string(rec["question_id"]) + "')";
    }
    RawSample s;
    if (!rec.contains("question_id")) {
        throw ParseError(label + ": missing field 'question_id'");
    }
    s.sample_id = json_scalar_to_string(rec["question_id"]);
    s.question = require_string(rec, "question", label);
    if (!rec.contains("image_id")) {
        throw ParseError(label + ": missing field 'image_id'");
    }
    s.image_ref = json_scalar_to_string(rec["image_id"]);
    if (rec.contains("choices") && rec.contains("correct_choice_idx") && rec["correct_choice_idx"].is_number_integer()) {
        const auto idx = rec["correct_choice_idx"].get<long long>();
        const auto& choices = rec["choices"];
        if (choices.is_array() && idx >= 0 && idx < static_cast<long long>(choices.size()) &&
            choices[static_cast<std::size_t>(idx)].is_string()) {
            s.answer = choices[static_cast<std::size_t>(idx)].get<std::string>();
        }
    }
    if (s.answer.empty() && rec.contains("direct_answers") && rec["direct_answers"].is_array()) {
        std::vector<std::string> answers;
        for (const auto& a : rec["direct_answers"]) {
            if (a.is_string()) {
                answers.push_back(a.get<std::string>());
            }
        }
        s.answer = most_common(answers);
    }
    if (s.answer.empty()) {
        throw ParseError(label + ": missing field 'answer'");
    }
    if (!rec.contains("rationales") || !rec["rationales"].is_array()) {
        throw ParseError(label + ": missing field 'rationales'");
    }
    for (const auto& e : rec["rationales"]) {
        if (e.is_string()) {
            s.explanations.push_back(e.get<std::string>());
        }
    }
    s.split = default_split;
    return s;
}

void validate(const RawSample& s, std::size_t index) {
    const auto label = "record " + std::to_string(index) + " (sample_id '" + s.sample_id + "')";
    if (s.sample_id.empty()) {
        throw ParseError(label + ": empty sample_id");
    }
    if (tokenize(s.question).empty()) {
        throw ParseError(label + ": empty question");
    }
    if (tokenize(s.answer).empty()) {
        throw ParseError(label + ": empty answer");
    }
    if (s.explanations.empty()) {
        throw ParseError(label + ": no reference explanations");
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<json> parse_json_lines(const std::string& text, const fs::path& path) {
    std::vector<json> records;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": record " + std::to_string(records.size()) + " (line " +
                             std::to_string(line_no) + "): " + e.what());
        }
    }
    return records;
}

} // namespace

FeatureMatrix read_feature_file(const fs::path& path, int rows, int cols) {
    FeatureMatrix f;
    if (path.extension() == ".csv") {
        std::ifstream in(path);
        if (!in) {
            throw IngestionError("cannot open feature file " + path.string());
        }
        for (std::string line; std::getline(in, line);) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            std::istringstream ls(line);
            int width = 0;
            for (std::string cell; std::getline(ls, cell, ',');) {
                try {
                    f.data.push_back(std::stof(cell));
                } catch (const std::exception&) {
                    throw ParseError(path.string() + ": bad number '" + cell + "'");
                }
                ++width;
            }
            if (f.cols == 0) {
                f.cols = width;
            } else if (width != f.cols) {
                throw ParseError(path.string() + ": ragged CSV rows");
            }
            ++f.rows;
        }
    } else {
        const auto bytes = read_file(path);
        if (bytes.size() % 4 != 0) {
            throw ParseError(path.string() + ": size is not a multiple of 4 bytes");
        }
        const auto count = bytes.size() / 4;
        f.data.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t word = 0;
            for (int b = 3; b >= 0; --b) {
                word = (word << 8) | static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]);
            }
            f.data[i] = std::bit_cast<float>(word);
        }
        if (rows > 0) {
            if (count % static_cast<std::size_t>(rows) != 0) {
                throw ParseError(path.string() + ": " + std::to_string(count) + " values do not divide into " +
                                 std::to_string(rows) + " rows");
            }
            f.rows = rows;
            f.cols = static_cast<int>(count / static_cast<std::size_t>(rows));
        } else if (cols > 0) {
            f.cols = cols;
            f.rows = static_cast<int>(count / static_cast<std::size_t>(cols));
        } else {
            throw ConfigError(path.string() + ": binary features need m or d_raw to be configured");
        }
    }
    if ((rows > 0 && f.rows != rows) || (cols > 0 && f.cols != cols)) {
        throw ConfigError(path.string() + ": feature shape " + std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                          " does not match configured " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    return f;
}

void write_feature_file(const fs::path& path, const FeatureMatrix& features) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    for (float v : features.data) {
        const auto word = std::bit_cast<std::uint32_t>(v);
        const char bytes[4] = {static_cast<char>(word & 0xff), static_cast<char>((word >> 8) & 0xff),
                               static_cast<char>((word >> 16) & 0xff), static_cast<char>((word >> 24) & 0xff)};
        out.write(bytes, 4);
    }
}

DatasetSplit load_dataset(const fs::path& path, DatasetFormat format, const LoadOptions& options) {
    const auto text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        throw ParseError(path.string() + ": empty dataset file");
    }

    DatasetSplit split;
    std::vector<json> records;
    bool vqax_native = false;
    json whole;
    if (text[first] == '[') {
        try {
            whole = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        records.assign(whole.begin(), whole.end());
    } else {
        // One object per line, unless the whole file is a VQA-X style map.
        if (format == DatasetFormat::vqax_json) {
            try {
                whole = json::parse(text);
                vqax_native = whole.is_object() && !whole.contains("sample_id");
            } catch (const json::parse_error&) {
                vqax_native = false;
            }
        }
        if (!vqax_native) {
            records = parse_json_lines(text, path);
        }
    }

    if (vqax_native) {
        std::size_t i = 0;
        for (const auto& [key, rec] : whole.items()) {
            split.samples.push_back(parse_vqax_record(key, rec, i++, options.default_split));
        }
    } else {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& rec = records[i];
            const bool native_aok = format == DatasetFormat::aokvqa_json && rec.is_object() &&
                                    !rec.contains("sample_id") && rec.contains("question_id");
            split.samples.push_back(native_aok ? parse_aokvqa_record(rec, i, options.default_split)
                                               : parse_flat_record(rec, i, options.default_split));
        }
    }
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
        validate(split.samples[i], i);
    }

    std::stable_sort(split.samples.begin(), split.samples.end(),
                     [](const RawSample& a, const RawSample& b) { return a.sample_id < b.sample_id; });
    for (std::size_t i = 1; i < split.samples.size(); ++i) {
        if (split.samples[i].sample_id == split.samples[i - 1].sample_id &&
            split.samples[i].split == split.samples[i - 1].split) {
            throw ParseError(path.string() + ": duplicate sample_id '" + split.samples[i].sample_id + "'");
        }
    }

    if (!options.load_features) {
        return split;
    }
    const fs::path feature_dir = options.feature_dir.value_or(path.parent_path() / "features");
    std::set<std::string> refs;
    for (const auto& s : split.samples) {
        refs.insert(s.image_ref);
    }
    std::vector<std::string> missing;
    for (const auto& ref : refs) {
        fs::path candidate;
        for (const auto* ext : {".bin", ".csv"}) {
            auto p = feature_dir / (ref + ext);
            if (fs::exists(p)) {
                candidate = p;
                break;
            }
        }
        if (candidate.empty()) {
            missing.push_back(ref);
            continue;
        }
        split.feature_store.emplace(ref, read_feature_file(candidate, options.m, options.d_raw));
    }
    if (!missing.empty()) {
        std::string msg = path.string() + ": " + std::to_string(missing.size()) + " image_ref(s) without features in " +
                          feature_dir.string() + ":";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw IngestionError(msg);
    }
    return split;
}

void write_dataset(const DatasetSplit& split, const fs::path& json_path, const fs::path& feature_dir) {
    if (json_path.has_parent_path()) {
        fs::create_directories(json_path.parent_path());
    }
    std::ofstream out(json_path);
    if (!out) {
        throw Error("cannot write " + json_path.string());
    }
    for (const auto& s : split.samples) {
        json rec{{"sample_id", s.sample_id}, {"image_ref", s.image_ref},       {"question", s.question},
                 {"answer", s.answer},       {"explanations", s.explanations}, {"split", to_string(s.split)}};
        out << rec.dump() << '\n';
    }
    for (const auto& [ref, features] : split.feature_store) {
        write_feature_file(feature_dir / (ref + ".bin"), features);
    }
}

TokenizedSample tokenize_sample(const RawSample& sample, const Vocab& vocab) {
    if (sample.explanations.empty()) {
        throw InvalidArgument("sample '" + sample.sample_id + "' has no explanation");
    }
    TokenizedSample t;
    t.sample_id = sample.sample_id;
    t.image_ref = sample.image_ref;
    t.question_ids = vocab.encode(sample.question);
    t.explanation_ids = vocab.encode(sample.explanations.front());
    t.answer_ids = vocab.encode(sample.answer);
    if (t.question_ids.empty() || t.answer_ids.empty()) {
        throw InvalidArgument("sample '" + sample.sample_id + "' has an empty question or answer");
    }
    return t;
}

} // namespace mcle::data
