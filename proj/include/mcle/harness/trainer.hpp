// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mcle/data/dataset.hpp"
#include "mcle/data/vocab.hpp"
#include "mcle/harness/config.hpp"
#include "mcle/mining/mining.hpp"
#include "mcle/model/checkpoint.hpp"
#include "mcle/model/transformer.hpp"
#include "mcle/objectives/objectives.hpp"
#include "mcle/train/optimizer.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mcle::harness {

struct Datasets {
    data::DatasetSplit train;
    data::DatasetSplit test;
};

// Loads train_path/test_path, or generates the synthetic world when
// train_path is empty.
Datasets load_datasets(const RunConfig& config);

// Backbone, contrastive heads and everything needed to rebuild them.
template <typename Real>
struct ModelBundle {
    RunConfig config;
    data::Vocab vocab;
    model::ModelConfig model_config;
    ad::ParameterStore<Real> params;
    std::unique_ptr<model::TinyTransformer<Real>> model;
    objectives::MclePrograms<Real> programs;

    static ModelBundle create(const RunConfig& config, const data::DatasetSplit& train);
    // Binds model and heads to `params` as they stand.
    void bind();
};

template <typename Real>
ModelBundle<Real> load_bundle(const model::Checkpoint& ckpt);
template <typename Real>
ModelBundle<Real> load_bundle(const std::filesystem::path& path);

struct StepLog {
    int epoch = 0;  // 1-based
    std::int64_t step = 0;  // 1-based, global
    objectives::LossBreakdown loss;
    double tau = 0;
    double lr = 0;
    double grad_norm = 0;       // before clipping
    double grad_norm_clipped = 0;

    nlohmann::json to_json() const;
};

class TrainingDiverged : public NumericError {
public:
    using NumericError::NumericError;
};

template <typename Real>
class Trainer {
public:
    Trainer(RunConfig config, data::DatasetSplit train);
    // Continues from a checkpoint written by save(); `config` replaces the
    // stored one (typically to change epochs or out_dir).
    Trainer(const std::filesystem::path& checkpoint, data::DatasetSplit train, std::optional<RunConfig> config = {});

    // Trains until config().epochs are complete. Writes <out_dir>/steps.jsonl
    // and a checkpoint per epoch under <out_dir>/checkpoints. Throws
    // TrainingDiverged (naming the last good checkpoint) on a non-finite
    // loss or gradient.
    std::vector<StepLog> run(const std::function<void(const StepLog&)>& on_step = {});

    // One optimiser step on the given training samples.
    StepLog train_step(std::span<const std::size_t> indices, const mining::MiningIndex* index);

    void save(const std::filesystem::path& path) const;
    std::filesystem::path checkpoint_path(int epoch) const;
    std::filesystem::path final_checkpoint_path() const;

    const RunConfig& config() const { return bundle_.config; }
    const ModelBundle<Real>& bundle() const { return bundle_; }
    int epoch() const { return epoch_; }
    std::int64_t step() const { return step_; }

private:
    void log_step(const StepLog& log) const;

    data::DatasetSplit train_;
    ModelBundle<Real> bundle_;
    std::unique_ptr<train::AdamW<Real>> optimizer_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
    std::int64_t step_ = 0;
    std::filesystem::path last_good_;
};

extern template struct ModelBundle<float>;
extern template struct ModelBundle<double>;
extern template class Trainer<float>;
extern template class Trainer<double>;

} // namespace mcle::harness
