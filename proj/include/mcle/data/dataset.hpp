// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcle::data {

class Vocab;

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct RawSample {
    std::string sample_id;
    std::string image_ref;
    std::string question;
    std::string answer;
    std::vector<std::string> explanations;
    Split split = Split::train;

    bool operator==(const RawSample&) const = default;
};

// m rows x d_raw columns, row-major.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    float at(int r, int c) const { return data[static_cast<std::size_t>(r * cols + c)]; }
    bool operator==(const FeatureMatrix&) const = default;
};

class DatasetSplit {
public:
    std::vector<RawSample> samples;
    std::map<std::string, FeatureMatrix> feature_store;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    const RawSample* find(std::string_view sample_id) const;
    const FeatureMatrix& features(const std::string& image_ref) const;

    bool operator==(const DatasetSplit&) const = default;
};

enum class DatasetFormat { vqax_json, aokvqa_json, synthetic_json };

DatasetFormat parse_format(std::string_view text);
std::string_view to_string(DatasetFormat format);

struct LoadOptions {
    // Defaults to "<dataset dir>/features".
    std::optional<std::filesystem::path> feature_dir;
    int m = 0;      // image slots; 0 accepts whatever the files hold
    int d_raw = 0;  // raw feature width; 0 infers it
    bool load_features = true;
    // Split assigned to records that do not carry one.
    Split default_split = Split::train;
};

// Reads a dataset file. Records follow the flat schema
//   {"sample_id", "image_ref", "question", "answer", "explanations", "split"}
// as a top-level array or one object per line. vqax_json additionally accepts
// the published VQA-X layout (object keyed by question id) and aokvqa_json the
// A-OKVQA list layout. Samples come back sorted by sample_id.
//
// Throws ParseError naming the offending record and IngestionError listing
// image refs without a feature file.
DatasetSplit load_dataset(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& options = {});

// Binary feature file: little-endian float32, rows*cols values. A .csv file
// holds one row per line.
FeatureMatrix read_feature_file(const std::filesystem::path& path, int rows, int cols);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features);

// Writes samples as JSON lines plus "<dir>/features/<image_ref>.bin".
void write_dataset(const DatasetSplit& split, const std::filesystem::path& json_path,
                   const std::filesystem::path& feature_dir);

struct TokenizedSample {
    std::string sample_id;
    std::string image_ref;
    std::vector<int> question_ids;
    std::vector<int> explanation_ids;  // first reference explanation
    std::vector<int> answer_ids;
};

TokenizedSample tokenize_sample(const RawSample& sample, const Vocab& vocab);

} // namespace mcle::data
