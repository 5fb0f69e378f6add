// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "mcle/common/error.hpp"
#include "mcle/mining/mining.hpp"
#include "support/gradcheck.hpp"
#include "support/toy.hpp"

#include <set>

using namespace mcle;
using namespace mcle::mining;
using namespace mcle::testing;

namespace {

MiningEntry entry(std::string id, std::vector<double> q, std::vector<double> a, std::vector<int> answer) {
    MiningEntry e;
    e.sample_id = std::move(id);
    e.image_ref = "img-" + e.sample_id;
    e.answer_ids = std::move(answer);
    e.e_q = Eigen::Map<Eigen::RowVectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    e.e_a = Eigen::Map<Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    return e;
}

std::set<std::string> ids_of(const std::vector<MinedImage>& mined) {
    std::set<std::string> out;
    for (const auto& m : mined) {
        out.insert(m.sample_id);
    }
    return out;
}

// Independent oracle: a candidate belongs to the top k iff fewer than k
// eligible candidates beat it (higher score, or equal score and smaller id).
std::set<std::string> brute_force_top_k(const MiningIndex& index, const MiningEntry& anchor, int k) {
    std::vector<std::pair<std::string, double>> eligible;
    for (const auto& e : index.entries) {
        if (e.sample_id == anchor.sample_id || e.answer_ids == anchor.answer_ids) {
            continue;
        }
        const double sq = e.e_q.dot(anchor.e_q) / (e.e_q.norm() * anchor.e_q.norm());
        const double sa = e.e_a.dot(anchor.e_a) / (e.e_a.norm() * anchor.e_a.norm());
        eligible.emplace_back(e.sample_id, sq - sa);
    }
    std::set<std::string> out;
    for (const auto& [id, score] : eligible) {
        int beaten_by = 0;
        for (const auto& [other, s] : eligible) {
            if (s > score || (s == score && other < id)) {
                ++beaten_by;
            }
        }
        if (beaten_by < k) {
            out.insert(id);
        }
    }
    return out;
}

} // namespace

TEST_CASE("text_embedding is the mean word embedding", "[mining]") {
    ToyBackbone toy;
    const auto& table = toy.params.at(toy.params.id_of("bb.tok")).value;
    CHECK(text_embedding(*toy.model, std::vector<int>{7}, toy.params) == table.row(7).cast<double>());
    const auto a = text_embedding(*toy.model, std::vector<int>{3, 9, 9, 4}, toy.params);
    const auto b = text_embedding(*toy.model, std::vector<int>{9, 4, 3, 9}, toy.params);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(text_embedding(*toy.model, std::vector<int>{}, toy.params), InvalidArgument);
}

TEST_CASE("mining index has one deterministic entry per sample", "[mining]") {
    ToyWorld w(30);
    const auto idx = build_mining_index(w.split, w.vocab, *w.model, w.params);
    CHECK(idx.size() == 30);
    const auto again = build_mining_index(w.split, w.vocab, *w.model, w.params);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        CHECK(idx.entries[i].sample_id == again.entries[i].sample_id);
        CHECK(idx.entries[i].e_q == again.entries[i].e_q);
        CHECK(idx.entries[i].e_a == again.entries[i].e_a);
    }
    w.params.at(w.params.id_of("bb.tok")).value.array() += 0.25;
    const auto moved = build_mining_index(w.split, w.vocab, *w.model, w.params);
    CHECK(moved.entries[0].e_q != idx.entries[0].e_q);
}

TEST_CASE("identical question and answer candidates score zero and are excluded", "[mining]") {
    MiningIndex idx;
    idx.entries = {entry("a", {1, 0}, {1, 0}, {5}), entry("b", {1, 0}, {1, 0}, {5}),
                   entry("c", {1, 1}, {0, 1}, {6})};
    CHECK(mining_score(idx.entries[0], idx.entries[1]) == 0.0);
    const auto mined = mine_counterfactual_images(idx, "a", 1);
    REQUIRE(mined.size() == 1);
    CHECK(mined[0].sample_id == "c");
}

TEST_CASE("hand-built index matches exhaustive subset search", "[mining]") {
    MiningIndex idx;
    idx.entries = {entry("s0", {1, 0, 0}, {1, 0}, {1}),    entry("s1", {0.9, 0.1, 0}, {0, 1}, {2}),
                   entry("s2", {0.2, 1, 0}, {0.5, 0.5}, {3}), entry("s3", {1, 0.3, 0.1}, {-1, 0.2}, {4}),
                   entry("s4", {0, 0, 1}, {0.1, 1}, {5}),     entry("s5", {0.8, 0, 0.4}, {0.9, 0.1}, {6})};
    const auto& anchor = idx.entries[0];
    // best-sum 3-subset over the 5 candidates
    double best = -1e9;
    std::set<std::string> best_set;
    for (int a = 1; a < 6; ++a) {
        for (int b = a + 1; b < 6; ++b) {
            for (int c = b + 1; c < 6; ++c) {
                const double s = mining_score(anchor, idx.entries[static_cast<std::size_t>(a)]) +
                                 mining_score(anchor, idx.entries[static_cast<std::size_t>(b)]) +
                                 mining_score(anchor, idx.entries[static_cast<std::size_t>(c)]);
                if (s > best) {
                    best = s;
                    best_set = {idx.entries[static_cast<std::size_t>(a)].sample_id,
                                idx.entries[static_cast<std::size_t>(b)].sample_id,
                                idx.entries[static_cast<std::size_t>(c)].sample_id};
                }
            }
        }
    }
    const auto mined = mine_counterfactual_images(idx, anchor, 3);
    CHECK(ids_of(mined) == best_set);
    CHECK(mined[0].score >= mined[1].score);
    CHECK(mined[1].score >= mined[2].score);
}

TEST_CASE("equal scores go to the smaller sample_id", "[mining]") {
    MiningIndex idx;
    idx.entries = {entry("a", {1, 0}, {1, 0}, {1}), entry("m", {0, 1}, {0, 1}, {2}),
                   entry("x", {0, 1}, {0, 1}, {3}), entry("z", {0, 1}, {0, 1}, {4})};
    const auto mined = mine_counterfactual_images(idx, "a", 2);
    REQUIRE(mined.size() == 2);
    CHECK(mined[0].sample_id == "m");
    CHECK(mined[1].sample_id == "x");

    reset_mining_shortfall_count();
    CHECK(mine_counterfactual_images(idx, "a", 5).size() == 3);
    CHECK(mining_shortfall_count() == 1);
    CHECK_THROWS_AS(mine_counterfactual_images(idx, "nope", 1), InvalidArgument);
}

TEST_CASE("mined sets equal brute force on synthetic anchors", "[mining][property]") {
    ToyWorld w(200, 17);
    const auto idx = build_mining_index(w.split, w.vocab, *w.model, w.params);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto& anchor = idx.entries[pick(rng)];
        const auto mined = mine_counterfactual_images(idx, anchor, 3);
        CHECK(ids_of(mined) == brute_force_top_k(idx, anchor, 3));
        CHECK(mined == mine_counterfactual_images(idx, anchor, 3));
    }
}

TEST_CASE("attribution scores equal directional finite differences", "[mining][gradcheck]") {
    ToyWorld w(20, 23);
    double worst = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto [zv, zq] = w.embedded(i);
        const auto cot = data::assemble_cot(w.tokens(i), w.vocab);
        const auto scores = attribution_scores(*w.model, zv, zq, cot, w.params);
        // a shift-invariant normalisation would zero every score
        double largest = 0;
        for (double s : scores.object_scores) {
            largest = std::max(largest, std::abs(s));
        }
        for (double s : scores.word_scores) {
            largest = std::max(largest, std::abs(s));
        }
        CHECK(largest > 1e-3);
        auto lp = [&](const Matrix<double>& v, const Matrix<double>& q) {
            ad::Tape<double> t(false);
            return w.model->answer_logprob(t.constant(v), t.constant(q), cot, w.params).scalar();
        };
        const double eps = 1e-6;
        for (Eigen::Index r = 0; r < zv.rows(); ++r) {
            Matrix<double> up = zv, down = zv;
            up.row(r).array() += eps;
            down.row(r).array() -= eps;
            const double fd = (lp(up, zq) - lp(down, zq)) / (2 * eps);
            worst = std::max(worst, rel_err(scores.object_scores[static_cast<std::size_t>(r)], fd));
        }
        for (Eigen::Index r = 0; r < zq.rows(); ++r) {
            Matrix<double> up = zq, down = zq;
            up.row(r).array() += eps;
            down.row(r).array() -= eps;
            const double fd = (lp(zv, up) - lp(zv, down)) / (2 * eps);
            worst = std::max(worst, rel_err(scores.word_scores[static_cast<std::size_t>(r)], fd));
        }
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("an ignored image row has exactly zero attribution", "[mining]") {
    ToyWorld w(10, 29);
    const auto [zv, zq] = w.embedded(3);
    model::ForwardOptions opts;
    opts.image_slot_visible = {1, 0};
    const auto s = attribution_scores(*w.model, zv, zq, data::assemble_cot(w.tokens(3), w.vocab), w.params, opts);
    CHECK(s.object_scores[1] == 0.0);
    CHECK(s.object_scores[0] != 0.0);
}

TEST_CASE("duplicated object rows receive equal attribution", "[mining]") {
    ToyWorld w(10, 31);
    auto [zv, zq] = w.embedded(1);
    zv.row(1) = zv.row(0);
    const auto s = attribution_scores(*w.model, zv, zq, data::assemble_cot(w.tokens(1), w.vocab), w.params);
    CHECK(std::abs(s.object_scores[0] - s.object_scores[1]) <= 1e-8);
}

TEST_CASE("attribution scales linearly with the log-probability", "[mining]") {
    ToyWorld w(10, 37);
    const auto [zv, zq] = w.embedded(2);
    const auto cot = data::assemble_cot(w.tokens(2), w.vocab);
    const auto a = attribution_scores(*w.model, zv, zq, cot, w.params);
    const auto b = attribution_scores(*w.model, zv, zq, cot, w.params, {}, -2.5);
    for (std::size_t i = 0; i < a.object_scores.size(); ++i) {
        CHECK(std::abs(b.object_scores[i] + 2.5 * a.object_scores[i]) <= 1e-8 * std::max(1.0, std::abs(b.object_scores[i])));
    }
    for (std::size_t i = 0; i < a.word_scores.size(); ++i) {
        CHECK(std::abs(b.word_scores[i] + 2.5 * a.word_scores[i]) <= 1e-8 * std::max(1.0, std::abs(b.word_scores[i])));
    }
}

TEST_CASE("factual split keeps the top objects and words", "[mining]") {
    AttributionScores s{{3, 1, 2, 0}, {0.5, 0.5, 0.1}};
    const auto fs = split_factual_counterfactual(s, 2);
    CHECK(fs.kept_objects == std::vector<int>{0, 2});
    CHECK(fs.masked_objects == std::vector<int>{1, 3});
    CHECK(fs.kept_words == std::vector<int>{0, 1});
    CHECK(fs.masked_words == std::vector<int>{2});

    const auto all = split_factual_counterfactual(AttributionScores{{1.0}, {2.0}}, 2);
    CHECK(all.kept_objects == std::vector<int>{0});
    CHECK(all.masked_objects.empty());
    CHECK_THROWS_AS(split_factual_counterfactual(s, 0), InvalidArgument);
}

TEST_CASE("factual split partitions indices for random scores", "[mining][property]") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_int_distribution<int> val(-3, 3);  // coarse values force ties
    for (int trial = 0; trial < 500; ++trial) {
        AttributionScores s;
        s.object_scores.resize(static_cast<std::size_t>(len(rng)));
        s.word_scores.resize(static_cast<std::size_t>(len(rng)));
        for (auto& x : s.object_scores) {
            x = val(rng);
        }
        for (auto& x : s.word_scores) {
            x = val(rng);
        }
        const int k = 1 + trial % 3;
        const auto fs = split_factual_counterfactual(s, k);
        CHECK(fs.kept_objects.size() == std::min<std::size_t>(static_cast<std::size_t>(k), s.object_scores.size()));
        std::vector<int> merged = fs.kept_objects;
        merged.insert(merged.end(), fs.masked_objects.begin(), fs.masked_objects.end());
        std::sort(merged.begin(), merged.end());
        std::vector<int> expected(s.object_scores.size());
        std::iota(expected.begin(), expected.end(), 0);
        CHECK(merged == expected);
        // every kept score beats every masked one, lower index on ties
        for (int kept : fs.kept_objects) {
            for (int masked : fs.masked_objects) {
                const double a = s.object_scores[static_cast<std::size_t>(kept)];
                const double b = s.object_scores[static_cast<std::size_t>(masked)];
                CHECK((a > b || (a == b && kept < masked)));
            }
        }
    }
}

TEST_CASE("masked views carry the identical mask row", "[mining]") {
    ad::Tape<double> t(false);
    const auto seq = t.constant(gaussian(4, 3, 1));
    const auto mask = t.constant(gaussian(1, 3, 2));
    const auto fact = masked_view(seq, mask, {0, 2});
    const auto counter = masked_view(seq, mask, {1, 3});
    CHECK(fact.value().row(0) == seq.value().row(0));
    CHECK(fact.value().row(1) == mask.value());
    CHECK(counter.value().row(0) == mask.value());
    CHECK(fact.value().row(3) == counter.value().row(0));
    CHECK(counter.value().row(3) == seq.value().row(3));
}
