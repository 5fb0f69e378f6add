// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/harness/trainer.hpp"

#include "mcle/common/error.hpp"
#include "mcle/data/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mcle::harness {

namespace {

template <typename Real>
constexpr model::Precision precision_of() {
    return std::is_same_v<Real, float> ? model::Precision::f32 : model::Precision::f64;
}

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream o;
    o << rng;
    return o.str();
}

std::mt19937_64 rng_from_state(const std::string& s) {
    std::mt19937_64 rng;
    std::istringstream in(s);
    in >> rng;
    if (!in) {
        throw ParseError("checkpoint holds a corrupt rng state");
    }
    return rng;
}

data::DatasetSplit load_split(const RunConfig& c, const std::string& path, data::Split split) {
    data::LoadOptions opts;
    if (!c.feature_dir.empty()) {
        opts.feature_dir = c.feature_dir;
    }
    opts.default_split = split;
    return data::load_dataset(path, data::parse_format(c.dataset_format), opts);
}

std::pair<int, int> feature_shape(const data::DatasetSplit& split) {
    if (split.feature_store.empty()) {
        throw ConfigError("training split carries no image features");
    }
    const auto& f = split.feature_store.begin()->second;
    return {f.rows, f.cols};
}

} // namespace

Datasets load_datasets(const RunConfig& config) {
    Datasets ds;
    if (config.train_path.empty()) {
        data::SyntheticConfig sc;
        sc.split = data::Split::train;
        ds.train = data::generate_synthetic(config.data_seed, config.synthetic_train, sc);
        sc.split = data::Split::test;
        ds.test = data::generate_synthetic(config.data_seed + 1, config.synthetic_test, sc);
        return ds;
    }
    ds.train = load_split(config, config.train_path, data::Split::train);
    if (!config.test_path.empty()) {
        ds.test = load_split(config, config.test_path, data::Split::test);
    }
    return ds;
}

template <typename Real>
ModelBundle<Real> ModelBundle<Real>::create(const RunConfig& config, const data::DatasetSplit& train) {
    if (train.empty()) {
        throw ConfigError("training split is empty");
    }
    ModelBundle b;
    b.config = config;
    b.vocab = data::build_vocab(std::vector<data::DatasetSplit>{train}, config.min_freq);
    const auto [m, d_raw] = feature_shape(train);
    b.model_config = config.model_config(b.vocab.size(), m, d_raw);
    std::mt19937_64 rng(config.seed);
    model::TinyTransformer<Real>::register_parameters(b.model_config, b.params, rng);
    objectives::MclePrograms<Real>::register_parameters(b.params, b.model_config.d, config.tau_init, rng);
    b.bind();
    return b;
}

template <typename Real>
void ModelBundle<Real>::bind() {
    model = std::make_unique<model::TinyTransformer<Real>>(model_config, params);
    programs = objectives::MclePrograms<Real>::bind(*model, params);
}

template <typename Real>
ModelBundle<Real> load_bundle(const model::Checkpoint& ckpt) {
    ModelBundle<Real> b;
    try {
        b.config = run_config_from_json(ckpt.header.at("run_config"));
        b.vocab = data::Vocab::deserialize(ckpt.header.at("vocab").get<std::string>());
        b.model_config = ckpt.header.at("model_config").get<model::ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header is incomplete: ") + e.what());
    }
    b.params = model::get_store<Real>(ckpt, "param/");
    b.bind();
    return b;
}

template <typename Real>
ModelBundle<Real> load_bundle(const std::filesystem::path& path) {
    return load_bundle<Real>(model::load_checkpoint(path));
}

nlohmann::json StepLog::to_json() const {
    return {{"epoch", epoch},         {"step", step},       {"l_vqa", loss.l_vqa},
            {"l_sem", loss.l_sem},    {"l_img", loss.l_img}, {"l_ins", loss.l_ins},
            {"total", loss.total},    {"tau", tau},         {"lr", lr},           {"grad_norm", grad_norm},
            {"grad_norm_clipped", grad_norm_clipped}};
}

template <typename Real>
Trainer<Real>::Trainer(RunConfig config, data::DatasetSplit train) : train_(std::move(train)) {
    config.finalize();
    bundle_ = ModelBundle<Real>::create(config, train_);
    optimizer_ = std::make_unique<train::AdamW<Real>>(
        bundle_.params, train::AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    rng_.seed(config.seed);
}

template <typename Real>
Trainer<Real>::Trainer(const std::filesystem::path& checkpoint, data::DatasetSplit train,
                       std::optional<RunConfig> config)
    : train_(std::move(train)) {
    const auto ckpt = model::load_checkpoint(checkpoint);
    bundle_ = load_bundle<Real>(ckpt);
    if (config) {
        config->finalize();
        bundle_.config = *config;
    }
    const auto& c = bundle_.config;
    optimizer_ = std::make_unique<train::AdamW<Real>>(
        bundle_.params, train::AdamWConfig{c.lr, 0.9, 0.999, 1e-8, c.weight_decay});
    try {
        optimizer_->restore(model::get_store<Real>(ckpt, "adam.m/"), model::get_store<Real>(ckpt, "adam.v/"),
                            ckpt.header.at("adam_steps").get<std::int64_t>());
        rng_ = rng_from_state(ckpt.header.at("rng").get<std::string>());
        epoch_ = ckpt.header.at("epoch").get<int>();
        step_ = ckpt.header.at("step").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint lacks training state: ") + e.what());
    }
    last_good_ = checkpoint;
}

template <typename Real>
std::filesystem::path Trainer<Real>::checkpoint_path(int epoch) const {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch);
    return std::filesystem::path(config().out_dir) / "checkpoints" / name;
}

template <typename Real>
std::filesystem::path Trainer<Real>::final_checkpoint_path() const {
    return std::filesystem::path(config().out_dir) / "final.ckpt";
}

template <typename Real>
void Trainer<Real>::save(const std::filesystem::path& path) const {
    model::Checkpoint ckpt;
    ckpt.header["kind"] = "mcle-train-state";
    ckpt.header["run_config"] = to_json(bundle_.config);
    ckpt.header["model_config"] = bundle_.model_config;
    ckpt.header["vocab"] = bundle_.vocab.serialize();
    ckpt.header["epoch"] = epoch_;
    ckpt.header["step"] = step_;
    ckpt.header["rng"] = rng_state(rng_);
    ckpt.header["adam_steps"] = optimizer_->steps();
    ckpt.header["precision"] = std::string(model::to_string(precision_of<Real>()));
    model::put_store(ckpt, "param/", bundle_.params);
    model::put_store(ckpt, "adam.m/", optimizer_->first_moments());
    model::put_store(ckpt, "adam.v/", optimizer_->second_moments());
    model::save_checkpoint(path, ckpt);
}

template <typename Real>
StepLog Trainer<Real>::train_step(std::span<const std::size_t> indices, const mining::MiningIndex* index) {
    const auto& c = bundle_.config;
    const auto obj = c.objective_config();
    const auto batch =
        objectives::prepare_batch(bundle_.programs, bundle_.params, train_, indices, bundle_.vocab, index, obj, rng_);

    StepLog log;
    log.epoch = epoch_ + 1;
    log.step = step_ + 1;
    const auto diverged = [&](const std::string& what) {
        const std::string ref = last_good_.empty() ? "none (no checkpoint written yet)" : last_good_.string();
        return TrainingDiverged("step " + std::to_string(log.step) + ": " + what + "; last good checkpoint: " + ref);
    };

    ad::Tape<Real> tape;
    objectives::BatchLoss<Real> loss;
    try {
        loss = objectives::batch_loss(tape, bundle_.programs, bundle_.params, batch, obj);
    } catch (const NumericError& e) {
        throw diverged(e.what());
    }
    tape.backward(loss.total);
    ad::Gradients<Real> grads(bundle_.params);
    tape.accumulate_param_grads(grads);
    if (!grads.all_finite()) {
        throw diverged("non-finite gradient");
    }
    log.grad_norm = train::clip_grad_norm(grads, c.clip_norm);
    log.grad_norm_clipped = static_cast<double>(grads.global_norm());
#ifndef NDEBUG
    if (log.grad_norm_clipped > c.clip_norm * (1 + 1e-4)) {
        throw NumericError("post-clip gradient norm exceeds the bound");
    }
#endif
    const auto per_epoch = (static_cast<std::int64_t>(train_.size()) + c.batch_size - 1) / c.batch_size;
    log.lr = c.lr_at(step_, per_epoch * c.epochs);
    optimizer_->set_lr(log.lr);
    optimizer_->step(bundle_.params, grads);
    if (!bundle_.params.all_finite()) {
        throw diverged("non-finite parameter after update");
    }
    log.loss = loss.breakdown;
    log.tau = loss.tau;
    ++step_;
    return log;
}

template <typename Real>
void Trainer<Real>::log_step(const StepLog& log) const {
    const auto path = std::filesystem::path(config().out_dir) / "steps.jsonl";
    std::ofstream out(path, std::ios::app);
    out << log.to_json().dump() << '\n';
}

template <typename Real>
std::vector<StepLog> Trainer<Real>::run(const std::function<void(const StepLog&)>& on_step) {
    const auto& c = bundle_.config;
    std::filesystem::create_directories(c.out_dir);
    if (step_ == 0) {
        std::ofstream(std::filesystem::path(c.out_dir) / "steps.jsonl", std::ios::trunc);
        std::ofstream(std::filesystem::path(c.out_dir) / "config.txt", std::ios::trunc) << to_config_text(c);
    }
    const bool need_index = c.objective_config().levels.image;
    const std::size_t n = train_.size();
    const auto bs = static_cast<std::size_t>(c.batch_size);

    std::vector<StepLog> logs;
    while (epoch_ < c.epochs) {
        mining::MiningIndex index;
        if (need_index) {
            index = mining::build_mining_index(train_, bundle_.vocab, *bundle_.model, bundle_.params);
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng_)]);
        }
        for (std::size_t b = 0; b < n; b += bs) {
            const std::span<const std::size_t> batch(order.data() + b, std::min(bs, n - b));
            auto log = train_step(batch, need_index ? &index : nullptr);
            log_step(log);
            if (on_step) {
                on_step(log);
            }
            logs.push_back(log);
        }
        ++epoch_;
        save(checkpoint_path(epoch_));
        last_good_ = checkpoint_path(epoch_);
    }
    save(final_checkpoint_path());
    return logs;
}

template struct ModelBundle<float>;
template struct ModelBundle<double>;
template ModelBundle<float> load_bundle<float>(const model::Checkpoint&);
template ModelBundle<double> load_bundle<double>(const model::Checkpoint&);
template ModelBundle<float> load_bundle<float>(const std::filesystem::path&);
template ModelBundle<double> load_bundle<double>(const std::filesystem::path&);
template class Trainer<float>;
template class Trainer<double>;

} // namespace mcle::harness
