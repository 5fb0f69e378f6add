// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Human-evaluation plumbing: task export and the HTTP service the annotation
// UI talks to.
//
//   GET  /tasks?evaluator=<id>   JSON array of tasks <id> has not answered
//   POST /responses              AnnotationResponse JSON -> 204, or 400 with
//                                {"errors": ["<field>: <message>", ...]}
//   GET  /progress[?evaluator=]  {"answered": n, "total": N}

#pragma once

#include "mcle/data/dataset.hpp"
#include "mcle/eval/human.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mcle::harness {

struct AnnotationTask {
    std::string sample_id;
    std::string image_ref;
    std::string question;
    std::string generated_answer;
    std::string generated_explanation;

    bool operator==(const AnnotationTask&) const = default;
};

nlohmann::json to_json(const AnnotationTask& t);
AnnotationTask task_from_json(const nlohmann::json& j);

// One task per prediction, joined with the split and shuffled with `seed`.
// Throws InvalidArgument listing every prediction id the split lacks.
std::vector<AnnotationTask> export_annotation_tasks(const std::filesystem::path& predictions,
                                                    const data::DatasetSplit& split,
                                                    const std::filesystem::path& out, std::uint64_t seed);
std::vector<AnnotationTask> read_tasks(const std::filesystem::path& path);

// Thread-safe state behind the service. Accepted responses are appended to
// the responses file; a repeated (sample_id, evaluator_id) replaces the
// earlier answer.
class AnnotationStore {
public:
    AnnotationStore(std::vector<AnnotationTask> tasks, std::filesystem::path responses_path);

    nlohmann::json tasks_for(const std::optional<std::string>& evaluator) const;
    // With an evaluator: tasks that evaluator answered. Without: tasks with
    // at least one response.
    nlohmann::json progress(const std::optional<std::string>& evaluator) const;

    struct Reply {
        int status = 204;
        std::string body;
    };
    Reply submit(const std::string& body);

    std::vector<eval::AnnotationResponse> responses() const;
    std::size_t task_count() const { return tasks_.size(); }

private:
    std::vector<AnnotationTask> tasks_;
    std::map<std::string, std::size_t> task_index_;
    std::filesystem::path responses_path_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, eval::AnnotationResponse> answers_;
};

class AnnotationService {
public:
    explicit AnnotationService(AnnotationStore& store);
    ~AnnotationService();
    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    // Port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace mcle::harness
