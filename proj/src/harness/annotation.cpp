// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/harness/annotation.hpp"

#include "mcle/common/error.hpp"
#include "mcle/eval/metrics.hpp"

#include <httplib.h>

#include <fstream>
#include <random>

namespace mcle::harness {

nlohmann::json to_json(const AnnotationTask& t) {
    return {{"sample_id", t.sample_id},
            {"image_ref", t.image_ref},
            {"question", t.question},
            {"generated_answer", t.generated_answer},
            {"generated_explanation", t.generated_explanation}};
}

AnnotationTask task_from_json(const nlohmann::json& j) {
    try {
        return {j.at("sample_id").get<std::string>(), j.at("image_ref").get<std::string>(),
                j.at("question").get<std::string>(), j.at("generated_answer").get<std::string>(),
                j.at("generated_explanation").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad annotation task: ") + e.what());
    }
}

std::vector<AnnotationTask> export_annotation_tasks(const std::filesystem::path& predictions,
                                                    const data::DatasetSplit& split,
                                                    const std::filesystem::path& out, std::uint64_t seed) {
    const auto preds = eval::read_predictions(predictions);
    std::vector<AnnotationTask> tasks;
    std::string missing;
    std::size_t n_missing = 0;
    for (const auto& p : preds) {
        const auto* s = split.find(p.sample_id);
        if (s == nullptr) {
            missing += (n_missing++ ? ", " : "") + p.sample_id;
            continue;
        }
        tasks.push_back({s->sample_id, s->image_ref, s->question, p.answer, p.explanation});
    }
    if (n_missing > 0) {
        throw InvalidArgument(std::to_string(n_missing) + " prediction(s) not in the split: " + missing);
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = tasks.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(tasks[i - 1], tasks[pick(rng)]);
    }
    if (out.has_parent_path()) {
        std::filesystem::create_directories(out.parent_path());
    }
    std::ofstream f(out, std::ios::trunc);
    if (!f) {
        throw ConfigError("cannot write tasks " + out.string());
    }
    for (const auto& t : tasks) {
        f << to_json(t).dump() << '\n';
    }
    return tasks;
}

std::vector<AnnotationTask> read_tasks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open tasks " + path.string());
    }
    std::vector<AnnotationTask> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(task_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

AnnotationStore::AnnotationStore(std::vector<AnnotationTask> tasks, std::filesystem::path responses_path)
    : tasks_(std::move(tasks)), responses_path_(std::move(responses_path)) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (!task_index_.emplace(tasks_[i].sample_id, i).second) {
            throw InvalidArgument("duplicate task " + tasks_[i].sample_id);
        }
    }
    if (std::filesystem::exists(responses_path_)) {
        for (auto& r : eval::read_responses(responses_path_)) {
            auto key = std::make_pair(r.sample_id, r.evaluator_id);
            answers_[key] = std::move(r);
        }
    } else if (responses_path_.has_parent_path()) {
        std::filesystem::create_directories(responses_path_.parent_path());
    }
}

nlohmann::json AnnotationStore::tasks_for(const std::optional<std::string>& evaluator) const {
    std::lock_guard lock(mu_);
    auto out = nlohmann::json::array();
    for (const auto& t : tasks_) {
        if (evaluator && answers_.count({t.sample_id, *evaluator}) != 0) {
            continue;
        }
        out.push_back(to_json(t));
    }
    return out;
}

nlohmann::json AnnotationStore::progress(const std::optional<std::string>& evaluator) const {
    std::lock_guard lock(mu_);
    std::size_t answered = 0;
    for (const auto& t : tasks_) {
        if (evaluator) {
            answered += answers_.count({t.sample_id, *evaluator});
        } else {
            auto it = answers_.lower_bound({t.sample_id, std::string()});
            answered += it != answers_.end() && it->first.first == t.sample_id ? 1 : 0;
        }
    }
    return {{"answered", answered}, {"total", tasks_.size()}};
}

AnnotationStore::Reply AnnotationStore::submit(const std::string& body) {
    auto bad = [](std::vector<std::string> errors) {
        return Reply{400, nlohmann::json{{"errors", std::move(errors)}}.dump()};
    };
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        return bad({"body: not valid JSON"});
    }
    eval::AnnotationResponse r;
    try {
        r = eval::parse_response(j);
    } catch (const eval::ValidationError& e) {
        return bad(e.field_errors());
    }
    if (task_index_.count(r.sample_id) == 0) {
        return bad({"sample_id: '" + r.sample_id + "' is not a task"});
    }
    std::lock_guard lock(mu_);
    {
        std::ofstream out(responses_path_, std::ios::app);
        if (!out) {
            return Reply{500, nlohmann::json{{"errors", {"cannot append to responses file"}}}.dump()};
        }
        out << eval::to_json(r).dump() << '\n';
    }
    answers_[{r.sample_id, r.evaluator_id}] = std::move(r);
    return Reply{204, {}};
}

std::vector<eval::AnnotationResponse> AnnotationStore::responses() const {
    std::lock_guard lock(mu_);
    std::vector<eval::AnnotationResponse> out;
    for (const auto& [k, r] : answers_) {
        out.push_back(r);
    }
    return out;
}

struct AnnotationService::Impl {
    AnnotationStore& store;
    httplib::Server server;

    explicit Impl(AnnotationStore& s) : store(s) {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        auto evaluator_of = [](const httplib::Request& req) -> std::optional<std::string> {
            if (req.has_param("evaluator") && !req.get_param_value("evaluator").empty()) {
                return req.get_param_value("evaluator");
            }
            return std::nullopt;
        };
        server.Get("/tasks", [this, evaluator_of](const httplib::Request& req, httplib::Response& res) {
            res.set_content(store.tasks_for(evaluator_of(req)).dump(), "application/json");
        });
        server.Get("/progress", [this, evaluator_of](const httplib::Request& req, httplib::Response& res) {
            res.set_content(store.progress(evaluator_of(req)).dump(), "application/json");
        });
        server.Post("/responses", [this](const httplib::Request& req, httplib::Response& res) {
            const auto reply = store.submit(req.body);
            res.status = reply.status;
            if (!reply.body.empty()) {
                res.set_content(reply.body, "application/json");
            }
        });
    }
};

AnnotationService::AnnotationService(AnnotationStore& store) : impl_(std::make_unique<Impl>(store)) {}

AnnotationService::~AnnotationService() {
    stop();
}

int AnnotationService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) {
            throw ConfigError("cannot bind " + host);
        }
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void AnnotationService::listen() {
    impl_->server.listen_after_bind();
}

void AnnotationService::stop() {
    if (impl_->server.is_running()) {
        impl_->server.stop();
    }
}

} // namespace mcle::harness
