// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mcle/eval/metrics.hpp"
#include "mcle/harness/trainer.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace mcle::harness {

// Decodes every sample of `split` (greedy unless the run config says beam)
// and splits each output into explanation and answer text.
template <typename Real>
std::vector<eval::PredictionRecord> predict(const ModelBundle<Real>& bundle, const data::DatasetSplit& split);

struct Evaluation {
    eval::MetricReport report;
    std::vector<eval::PredictionRecord> predictions;
};

// Writes the predictions file when `predictions_out` is given.
template <typename Real>
Evaluation evaluate(const ModelBundle<Real>& bundle, const data::DatasetSplit& split, eval::Mode mode,
                    const std::optional<std::filesystem::path>& predictions_out = {});

// Loads the checkpoint in the precision named by MCLE_PRECISION.
Evaluation evaluate_checkpoint(const std::filesystem::path& checkpoint, const data::DatasetSplit& split,
                               eval::Mode mode, const std::optional<std::filesystem::path>& predictions_out = {});

} // namespace mcle::harness
