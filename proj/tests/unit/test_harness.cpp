// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "mcle/common/error.hpp"
#include "mcle/harness/annotation.hpp"
#include "mcle/harness/config.hpp"
#include "mcle/harness/evaluate.hpp"
#include "mcle/harness/trainer.hpp"

#include <httplib.h>

#include <fstream>
#include <set>
#include <thread>

using namespace mcle;
using namespace mcle::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("mcle_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig small_config(const fs::path& out, int n_train = 32) {
    RunConfig c;
    c.d = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_mult = 2;
    c.epochs = 2;
    c.batch_size = 16;
    c.synthetic_train = n_train;
    c.synthetic_test = 8;
    c.seed = 11;
    c.out_dir = out.string();
    return c;
}

std::vector<nlohmann::json> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

void check_same_breakdown(const objectives::LossBreakdown& a, const objectives::LossBreakdown& b, double tol) {
    CHECK(std::abs(a.l_vqa - b.l_vqa) <= tol);
    CHECK(std::abs(a.l_sem - b.l_sem) <= tol);
    CHECK(std::abs(a.l_img - b.l_img) <= tol);
    CHECK(std::abs(a.l_ins - b.l_ins) <= tol);
    CHECK(std::abs(a.total - b.total) <= tol);
}

} // namespace

TEST_CASE("config text parses typed fields and rejects bad input", "[harness][config]") {
    const auto c = parse_config_text("# run\nd = 16\n  lr=0.001  \nno_image = true\nout_dir = a b\n\nseed = 5 # tail\n");
    CHECK(c.d == 16);
    CHECK(c.lr == 0.001);
    CHECK(c.no_image);
    CHECK(c.out_dir == "a b");
    CHECK(c.seed == 5);
    CHECK_THROWS_AS(parse_config_text("nonsense = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("d = sixteen"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("no_cot = maybe"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just a line"), ConfigError);

    RunConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.finalize(), ConfigError);
}

TEST_CASE("every config field round-trips through text and JSON", "[harness][config]") {
    RunConfig c;
    c.alpha = 0.3;
    c.no_semantic = true;
    c.seed = 123456789012345ULL;
    c.train_path = "data/train.jsonl";
    c.beam_width = 5;
    c.decode = "beam";
    CHECK(to_config_text(parse_config_text(to_config_text(c))) == to_config_text(c));
    CHECK(to_config_text(run_config_from_json(to_json(c))) == to_config_text(c));
    std::set<std::string> names;
    for (const auto& f : config_fields()) {
        names.insert(f.name);
    }
    CHECK(names.size() == config_fields().size());
    for (const char* key : {"no_cot", "no_semantic", "no_image", "no_instance", "no_all", "seed", "tau_init", "k_ins"}) {
        CHECK(names.count(key) == 1);
    }
}

TEST_CASE("later assignments override earlier ones and no_all implies every level flag", "[harness][config]") {
    auto c = parse_config_text("epochs = 3\nno_all = true\n");
    set_field(c, "epochs", "4");
    c.finalize();
    CHECK(c.epochs == 4);
    CHECK(c.no_semantic);
    CHECK(c.no_image);
    CHECK(c.no_instance);
    const auto obj = c.objective_config();
    CHECK_FALSE(obj.levels.semantic);
    CHECK_FALSE(obj.levels.image);
    CHECK_FALSE(obj.levels.instance);
}

TEST_CASE("cosine schedule decays from lr to zero", "[harness][config]") {
    RunConfig c;
    c.lr = 2e-3;
    c.lr_schedule = "constant";
    CHECK(c.lr_at(50, 100) == 2e-3);
    c.lr_schedule = "cosine";
    CHECK(c.lr_at(0, 100) == 2e-3);
    CHECK(c.lr_at(50, 100) == Catch::Approx(1e-3).epsilon(1e-12));
    CHECK(c.lr_at(100, 100) == Catch::Approx(0.0).margin(1e-18));
    for (int s = 1; s < 100; ++s) {
        CHECK(c.lr_at(s, 100) < c.lr_at(s - 1, 100));
    }
    c.lr_schedule = "linear";
    CHECK_THROWS_AS(c.finalize(), ConfigError);
}

TEST_CASE("two epochs of 64 samples at batch 16 log exactly 8 steps", "[harness][train]") {
    const auto dir = scratch_dir("steps");
    auto c = small_config(dir, 64);
    Trainer<float> t(c, load_datasets(c).train);
    const auto logs = t.run();
    CHECK(logs.size() == 8);
    const auto lines = read_lines(dir / "steps.jsonl");
    REQUIRE(lines.size() == 8);
    CHECK(lines.back()["step"] == 8);
    CHECK(lines.back()["epoch"] == 2);
    CHECK(fs::exists(dir / "checkpoints" / "epoch_001.ckpt"));
    CHECK(fs::exists(dir / "checkpoints" / "epoch_002.ckpt"));
    CHECK(fs::exists(dir / "final.ckpt"));
    for (const auto& l : logs) {
        CHECK(l.loss.l_sem > 0);
        CHECK(l.loss.l_img > 0);
        CHECK(l.loss.l_ins > 0);
        CHECK(l.grad_norm_clipped <= c.clip_norm * (1 + 1e-4));
    }
}

TEST_CASE("no_all logs zero contrastive losses at every step", "[harness][train]") {
    const auto dir = scratch_dir("noall");
    auto c = small_config(dir);
    c.no_all = true;
    Trainer<float> t(c, load_datasets(c).train);
    for (const auto& line : (t.run(), read_lines(dir / "steps.jsonl"))) {
        CHECK(line["l_sem"] == 0.0);
        CHECK(line["l_img"] == 0.0);
        CHECK(line["l_ins"] == 0.0);
        CHECK(line["total"] == line["l_vqa"]);
    }
}

TEST_CASE("every ablation row trains to completion", "[harness][train]") {
    for (const char* flag : {"no_cot", "no_semantic", "no_image", "no_instance", "no_all"}) {
        const auto dir = scratch_dir(std::string("ablation_") + flag);
        auto c = small_config(dir, 16);
        c.epochs = 1;
        set_field(c, flag, "true");
        Trainer<float> t(c, load_datasets(c).train);
        CHECK(t.run().size() == 1);
        CHECK(fs::exists(t.final_checkpoint_path()));
    }
}

TEST_CASE("resuming from the epoch-1 checkpoint reproduces the uninterrupted run", "[harness][train][resume]") {
    const auto dir_a = scratch_dir("resume_a");
    auto c = small_config(dir_a);
    c.batch_size = 32;  // one step per epoch
    c.epochs = 3;
    const auto train = load_datasets(c).train;
    Trainer<double> full(c, train);
    const auto reference = full.run();
    REQUIRE(reference.size() == 3);

    const auto dir_b = scratch_dir("resume_b");
    auto resumed_config = c;
    resumed_config.out_dir = dir_b.string();
    Trainer<double> resumed(dir_a / "checkpoints" / "epoch_001.ckpt", train, resumed_config);
    CHECK(resumed.step() == 1);
    const auto rest = resumed.run();
    REQUIRE(rest.size() == 2);
    CHECK(rest[0].step == 2);
    check_same_breakdown(rest[0].loss, reference[1].loss, 1e-10);
    check_same_breakdown(rest[1].loss, reference[2].loss, 1e-10);
    CHECK(std::abs(rest[1].tau - reference[2].tau) <= 1e-10);
}

TEST_CASE("identical seeded runs give identical reports", "[harness][train][determinism]") {
    std::vector<eval::MetricReport> reports;
    for (int run = 0; run < 2; ++run) {
        const auto dir = scratch_dir("determinism_" + std::to_string(run));
        auto c = small_config(dir);
        const auto data = load_datasets(c);
        Trainer<double> t(c, data.train);
        t.run();
        reports.push_back(evaluate(t.bundle(), data.test, eval::Mode::unfiltered).report);
    }
    CHECK(eval::to_json(reports[0]) == eval::to_json(reports[1]));
}

TEST_CASE("a memorising model scores perfect accuracy and BLEU-4 on its training split", "[harness][eval]") {
    const auto dir = scratch_dir("overfit");
    RunConfig c;
    c.synthetic_train = 10;
    c.batch_size = 10;
    c.epochs = 150;
    c.lr = 1e-2;
    c.no_all = true;
    c.seed = 3;
    c.out_dir = dir.string();
    const auto train = load_datasets(c).train;
    Trainer<float> t(c, train);
    t.run();
    const auto e = evaluate(t.bundle(), train, eval::Mode::unfiltered);
    CHECK(e.report.accuracy == 1.0);
    REQUIRE(e.report.bleu4.has_value());
    CHECK(*e.report.bleu4 == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("rescoring the predictions file offline reproduces the report", "[harness][eval]") {
    const auto dir = scratch_dir("rescore");
    auto c = small_config(dir);
    const auto data = load_datasets(c);
    Trainer<float> t(c, data.train);
    t.run();
    for (auto mode : {eval::Mode::unfiltered, eval::Mode::filtered}) {
        const auto pred_path = dir / ("pred_" + std::string(eval::to_string(mode)) + ".jsonl");
        const auto e = evaluate(t.bundle(), data.test, mode, pred_path);
        const auto offline = eval::evaluate_split(eval::read_predictions(pred_path), data.test, mode,
                                                  c.answer_match_mode());
        CHECK(eval::to_json(offline) == eval::to_json(e.report));
    }
    const auto from_ckpt = evaluate_checkpoint(t.final_checkpoint_path(), data.test, eval::Mode::unfiltered);
    CHECK(from_ckpt.report.n_predictions == data.test.size());
}

TEST_CASE("filtered and unfiltered reports share accuracy and prediction count", "[harness][eval]") {
    const auto dir = scratch_dir("modes");
    auto c = small_config(dir);
    const auto data = load_datasets(c);
    Trainer<float> t(c, data.train);
    t.run();
    const auto preds = predict(t.bundle(), data.test);
    const auto u = eval::evaluate_split(preds, data.test, eval::Mode::unfiltered, c.answer_match_mode());
    const auto f = eval::evaluate_split(preds, data.test, eval::Mode::filtered, c.answer_match_mode());
    CHECK(u.accuracy == f.accuracy);
    CHECK(u.n_predictions == f.n_predictions);
    CHECK(u.n_evaluated == data.test.size());
    CHECK(f.n_evaluated == static_cast<std::size_t>(std::lround(f.accuracy * static_cast<double>(f.n_predictions))));
}

namespace {

data::DatasetSplit task_split() {
    RunConfig c;
    c.synthetic_test = 10;
    return load_datasets(c).test;
}

fs::path write_fake_predictions(const data::DatasetSplit& split, const fs::path& dir) {
    std::vector<eval::PredictionRecord> preds;
    for (const auto& s : split.samples) {
        preds.push_back({s.sample_id, s.explanations.front(), s.answer});
    }
    const auto p = dir / "pred.jsonl";
    eval::write_predictions(p, preds);
    return p;
}

} // namespace

TEST_CASE("annotation export joins the split and shuffles with the seed", "[harness][annotate]") {
    const auto dir = scratch_dir("export");
    const auto split = task_split();
    const auto pred = write_fake_predictions(split, dir);
    const auto a = export_annotation_tasks(pred, split, dir / "a.jsonl", 5);
    const auto b = export_annotation_tasks(pred, split, dir / "b.jsonl", 5);
    const auto c = export_annotation_tasks(pred, split, dir / "c.jsonl", 6);
    REQUIRE(a.size() == split.size());
    CHECK(a == b);
    CHECK(read_tasks(dir / "a.jsonl") == a);
    CHECK(a != c);
    std::set<std::string> ids;
    for (const auto& t : a) {
        const auto* s = split.find(t.sample_id);
        REQUIRE(s != nullptr);
        CHECK(t.question == s->question);
        CHECK(t.image_ref == s->image_ref);
        CHECK(t.generated_answer == s->answer);
        ids.insert(t.sample_id);
    }
    CHECK(ids.size() == split.size());

    const std::vector<eval::PredictionRecord> ghosts{{"ghost-1", "x", "y"}, {"ghost-2", "x", "y"}};
    eval::write_predictions(dir / "bad.jsonl", ghosts);
    try {
        export_annotation_tasks(dir / "bad.jsonl", split, dir / "d.jsonl", 5);
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("ghost-1") != std::string::npos);
        CHECK(std::string(e.what()).find("ghost-2") != std::string::npos);
    }
}

TEST_CASE("annotation service round trip with three evaluators", "[harness][annotate][http]") {
    const auto dir = scratch_dir("serve");
    const auto split = task_split();
    const auto tasks = export_annotation_tasks(write_fake_predictions(split, dir), split, dir / "tasks.jsonl", 1);
    const auto responses_path = dir / "responses.jsonl";

    AnnotationStore store(read_tasks(dir / "tasks.jsonl"), responses_path);
    AnnotationService service(store);
    const int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);

    auto progress = client.Get("/progress");
    REQUIRE(progress);
    CHECK(nlohmann::json::parse(progress->body) == nlohmann::json{{"answered", 0}, {"total", tasks.size()}});

    auto bad = client.Post("/responses", R"({"sample_id":")" + tasks[0].sample_id + R"(","evaluator_id":"e1","option":"no"})",
                           "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(bad->body.find("error_type") != std::string::npos);
    auto unknown = client.Post("/responses", R"({"sample_id":"nope","evaluator_id":"e1","option":"yes"})", "application/json");
    REQUIRE(unknown);
    CHECK(unknown->status == 400);
    auto garbage = client.Post("/responses", "{not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);

    // e1 answers yes, e2 weak_no/II, e3 no/I; e3 first says yes on every
    // task and then revises.
    const std::vector<std::pair<std::string, std::string>> plan = {
        {"e1", R"("option":"yes")"}, {"e2", R"("option":"weak_no","error_type":"II")"}, {"e3", R"("option":"no","error_type":"I")"}};
    std::vector<std::thread> evaluators;
    for (const auto& [who, choice] : plan) {
        evaluators.emplace_back([&, who = who, choice = choice] {
            httplib::Client cl("127.0.0.1", port);
            if (who == "e3") {
                for (const auto& t : tasks) {
                    auto r = cl.Post("/responses",
                                     R"({"sample_id":")" + t.sample_id + R"(","evaluator_id":"e3","option":"yes"})",
                                     "application/json");
                    CHECK((r && r->status == 204));
                }
            }
            auto listing = cl.Get(("/tasks?evaluator=" + who).c_str());
            REQUIRE(listing);
            for (const auto& t : nlohmann::json::parse(listing->body)) {
                auto r = cl.Post("/responses",
                                 R"({"sample_id":")" + t["sample_id"].get<std::string>() + R"(","evaluator_id":")" + who +
                                     R"(",)" + choice + "}",
                                 "application/json");
                CHECK((r && r->status == 204));
            }
        });
    }
    for (auto& e : evaluators) {
        e.join();
    }
    // e3 already answered everything, so its listing was empty and the
    // revisions never went out. Send them now.
    for (const auto& t : tasks) {
        auto r = client.Post("/responses",
                             R"({"sample_id":")" + t.sample_id + R"(","evaluator_id":"e3","option":"no","error_type":"I"})",
                             "application/json");
        CHECK((r && r->status == 204));
    }

    auto left = client.Get("/tasks?evaluator=e2");
    REQUIRE(left);
    CHECK(nlohmann::json::parse(left->body).empty());
    auto all_tasks = client.Get("/tasks");
    REQUIRE(all_tasks);
    CHECK(nlohmann::json::parse(all_tasks->body).size() == tasks.size());
    auto done = client.Get("/progress?evaluator=e1");
    REQUIRE(done);
    CHECK(nlohmann::json::parse(done->body)["answered"] == tasks.size());

    auto preflight = client.Options("/responses");
    REQUIRE(preflight);
    CHECK(preflight->get_header_value("Access-Control-Allow-Origin") == "*");

    service.stop();
    server.join();

    const auto responses = eval::read_responses(responses_path);
    CHECK(responses.size() == 3 * tasks.size());
    const auto report = eval::aggregate_human(responses);
    CHECK(report.human_score == Catch::Approx((1.0 + 1.0 / 3.0 + 0.0) / 3.0).epsilon(1e-12));
    CHECK(report.n_unqualified == 2 * tasks.size());
    CHECK(report.type_fractions[0] == Catch::Approx(0.5));
    CHECK(report.type_fractions[1] == Catch::Approx(0.5));
    CHECK(report.type_fractions[2] == 0.0);

    // a restarted store picks the file back up
    AnnotationStore reopened(read_tasks(dir / "tasks.jsonl"), responses_path);
    CHECK(reopened.progress(std::nullopt)["answered"] == tasks.size());
    CHECK(reopened.tasks_for(std::string("e1")).empty());
}
