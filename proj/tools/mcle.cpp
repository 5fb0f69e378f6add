// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// mcle: train, evaluate, mine, synthesize data and run human evaluation.

#include "mcle/common/error.hpp"
#include "mcle/data/synthetic.hpp"
#include "mcle/eval/human.hpp"
#include "mcle/harness/annotation.hpp"
#include "mcle/harness/config.hpp"
#include "mcle/harness/evaluate.hpp"
#include "mcle/harness/trainer.hpp"
#include "mcle/mining/mining.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <deque>
#include <iostream>
#include <map>
#include <thread>

namespace fs = std::filesystem;
using namespace mcle;

namespace {

// Every RunConfig field as --<name>, plus a --dash-name alias.
struct ConfigOverrides {
    std::map<std::string, std::string> values;
    std::deque<bool> flags;
    std::vector<std::pair<std::string, CLI::Option*>> options;

    void attach(CLI::App& app) {
        for (const auto& f : harness::config_fields()) {
            std::string names = "--" + f.name;
            std::string dashed = f.name;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != f.name) {
                names += ",--" + dashed;
            }
            CLI::Option* opt = nullptr;
            if (f.kind == harness::ConfigField::Kind::boolean) {
                flags.push_back(false);
                opt = app.add_flag(names, flags.back(), "config field");
            } else {
                opt = app.add_option(names, values[f.name], "config field");
            }
            options.emplace_back(f.name, opt);
        }
    }

    void apply(harness::RunConfig& config) const {
        std::size_t flag_i = 0;
        for (const auto& [name, opt] : options) {
            const bool is_flag = opt->get_expected_min() == 0;
            if (is_flag) {
                const bool v = flags[flag_i++];
                if (opt->count() > 0) {
                    harness::set_field(config, name, v ? "true" : "false");
                }
            } else if (opt->count() > 0) {
                harness::set_field(config, name, values.at(name));
            }
        }
    }
};

template <typename Real>
int run_training(const harness::RunConfig& config, const std::string& resume, bool quiet) {
    auto data = harness::load_datasets(config);
    auto trainer = resume.empty() ? harness::Trainer<Real>(config, std::move(data.train))
                                  : harness::Trainer<Real>(resume, std::move(data.train), config);
    trainer.run([quiet](const harness::StepLog& log) {
        if (!quiet) {
            std::cout << log.to_json().dump() << '\n';
        }
    });
    std::cerr << "final checkpoint: " << trainer.final_checkpoint_path().string() << '\n';
    return 0;
}

harness::RunConfig checkpoint_config(const fs::path& ckpt) {
    return harness::run_config_from_json(model::load_checkpoint(ckpt).header.at("run_config"));
}

data::DatasetSplit pick_split(const harness::Datasets& d, const std::string& split) {
    if (split == "train") {
        return d.train;
    }
    if (split == "test") {
        return d.test;
    }
    throw InvalidArgument("split must be train or test, got '" + split + "'");
}

template <typename Real>
void run_mining(const fs::path& ckpt, const std::string& anchor, int k, bool all) {
    const auto bundle = harness::load_bundle<Real>(ckpt);
    const auto data = harness::load_datasets(bundle.config);
    const auto index = mining::build_mining_index(data.train, bundle.vocab, *bundle.model, bundle.params);
    const auto* a = index.find(anchor);
    if (a == nullptr) {
        throw InvalidArgument("anchor '" + anchor + "' is not in the training split");
    }
    if (all) {
        for (const auto& e : index.entries) {
            if (e.sample_id != anchor) {
                std::cout << nlohmann::json{{"sample_id", e.sample_id}, {"score_vs_anchor", mining::mining_score(*a, e)}}.dump()
                          << '\n';
            }
        }
        return;
    }
    for (const auto& m : mining::mine_counterfactual_images(index, *a, k)) {
        std::cout << nlohmann::json{{"sample_id", m.sample_id}, {"image_ref", m.image_ref}, {"score_vs_anchor", m.score}}.dump()
                  << '\n';
    }
}

void serve(const fs::path& tasks_path, const fs::path& responses, const std::string& host, int port) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    harness::AnnotationStore store(harness::read_tasks(tasks_path), responses);
    harness::AnnotationService service(store);
    const int bound = service.bind(host, port);
    std::cerr << "serving " << store.task_count() << " tasks on http://" << host << ":" << bound << '\n';
    std::thread worker([&service] { service.listen(); });
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
    worker.join();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mcle: multi-level contrastive training for VQA with explanations"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train a model");
    std::string config_path;
    std::string resume;
    bool quiet = false;
    train->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
    train->add_flag("-q,--quiet", quiet, "do not print step logs");
    ConfigOverrides overrides;
    overrides.attach(*train);

    auto* evalc = app.add_subcommand("eval", "decode a split and score it");
    std::string ckpt;
    std::string split = "test";
    std::string mode = "unfiltered";
    std::string predictions_out;
    evalc->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    evalc->add_option("--split", split, "train or test");
    evalc->add_option("--mode", mode, "filtered or unfiltered");
    evalc->add_option("--predictions", predictions_out, "predictions file (default: next to the checkpoint)");

    auto* mine = app.add_subcommand("mine", "counterfactual images for one training sample");
    std::string anchor;
    int k = 3;
    bool mine_all = false;
    mine->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    mine->add_option("--anchor", anchor, "anchor sample_id")->required();
    mine->add_option("--k", k, "number of images")->check(CLI::PositiveNumber);
    mine->add_flag("--all", mine_all, "print the score of every index entry");

    auto* annotate = app.add_subcommand("annotate", "human evaluation");
    annotate->require_subcommand(1);
    auto* exportc = annotate->add_subcommand("export", "write annotation tasks");
    std::string predictions;
    std::string out;
    std::optional<std::uint64_t> seed;
    exportc->add_option("--predictions", predictions, "predictions file")->required()->check(CLI::ExistingFile);
    exportc->add_option("--ckpt", ckpt, "checkpoint whose run config names the data")->required()->check(CLI::ExistingFile);
    exportc->add_option("--split", split, "train or test");
    exportc->add_option("--out", out, "tasks file")->required();
    exportc->add_option("--seed", seed, "shuffle seed (default: the run seed)");

    auto* servec = annotate->add_subcommand("serve", "serve tasks over HTTP");
    std::string tasks;
    std::string responses;
    std::string host = "127.0.0.1";
    int port = 8080;
    servec->add_option("--tasks", tasks, "tasks file")->required()->check(CLI::ExistingFile);
    servec->add_option("--responses", responses, "responses file (appended)")->required();
    servec->add_option("--host", host, "bind address");
    servec->add_option("--port", port, "port, 0 for any")->check(CLI::Range(0, 65535));

    auto* aggregate = annotate->add_subcommand("aggregate", "score a responses file");
    aggregate->add_option("--responses", responses, "responses file")->required()->check(CLI::ExistingFile);

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset to disk");
    std::uint64_t synth_seed = 7;
    int n = 500;
    std::string synth_split = "train";
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--n", n, "sample count")->check(CLI::PositiveNumber);
    synth->add_option("--split", synth_split, "train, val or test");
    synth->add_option("--out", out, "dataset JSON lines file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const bool f64 = model::precision_from_env() == model::Precision::f64;
        if (*train) {
            harness::RunConfig config;
            if (!resume.empty()) {
                config = checkpoint_config(resume);
            }
            if (!config_path.empty()) {
                config = harness::load_config_file(config_path, config);
            }
            overrides.apply(config);
            config.finalize();
            return f64 ? run_training<double>(config, resume, quiet) : run_training<float>(config, resume, quiet);
        }
        if (*evalc) {
            const auto data = harness::load_datasets(checkpoint_config(ckpt));
            const auto target = pick_split(data, split);
            fs::path pred_path = predictions_out;
            if (pred_path.empty()) {
                pred_path = fs::path(ckpt).parent_path() / ("predictions_" + split + ".jsonl");
            }
            const auto e = harness::evaluate_checkpoint(ckpt, target, eval::parse_mode(mode), pred_path);
            std::cout << eval::to_json(e.report).dump(2) << '\n';
            std::cerr << "predictions: " << pred_path.string() << '\n';
            return 0;
        }
        if (*mine) {
            f64 ? run_mining<double>(ckpt, anchor, k, mine_all) : run_mining<float>(ckpt, anchor, k, mine_all);
            return 0;
        }
        if (*exportc) {
            const auto config = checkpoint_config(ckpt);
            const auto target = pick_split(harness::load_datasets(config), split);
            const auto written = harness::export_annotation_tasks(predictions, target, out, seed.value_or(config.seed));
            std::cerr << written.size() << " tasks written to " << out << '\n';
            return 0;
        }
        if (*servec) {
            serve(tasks, responses, host, port);
            return 0;
        }
        if (*aggregate) {
            const auto rs = eval::read_responses(responses);
            std::cout << eval::to_json(eval::aggregate_human(rs)).dump(2) << '\n';
            return 0;
        }
        if (*synth) {
            data::SyntheticConfig sc;
            sc.split = data::parse_split(synth_split);
            const auto ds = data::generate_synthetic(synth_seed, n, sc);
            const fs::path p(out);
            data::write_dataset(ds, p, p.parent_path() / "features");
            std::cerr << ds.size() << " samples written to " << out << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "mcle: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
