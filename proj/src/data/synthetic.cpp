// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/data/synthetic.hpp"

#include "mcle/common/error.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <random>
#include <regex>

namespace mcle::data {

namespace {

const std::array<const char*, 10> kNumberWords = {"zero", "one", "two",   "three", "four",
                                                   "five", "six", "seven", "eight", "nine"};

struct Object {
    int shape = 0;
    int color = 0;
};

class SceneBuilder {
public:
    SceneBuilder(const SyntheticConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

    int uniform(int lo, int hi) {  // inclusive
        return std::uniform_int_distribution<int>(lo, hi)(rng_);
    }

    int other_than(int excluded, int count) {
        const int v = uniform(0, count - 2);
        return v >= excluded ? v + 1 : v;
    }

    FeatureMatrix render(std::vector<Object> objects) {
        const int n_shapes = static_cast<int>(cfg_.shapes.size());
        const int n_colors = static_cast<int>(cfg_.colors.size());
        const int n_pos = cfg_.grid * cfg_.grid;
        std::vector<int> slots(static_cast<std::size_t>(cfg_.m));
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), rng_);
        std::vector<int> positions(static_cast<std::size_t>(n_pos));
        std::iota(positions.begin(), positions.end(), 0);
        std::shuffle(positions.begin(), positions.end(), rng_);

        FeatureMatrix f;
        f.rows = cfg_.m;
        f.cols = cfg_.d_raw();
        f.data.assign(static_cast<std::size_t>(f.rows * f.cols), 0.0f);
        for (std::size_t k = 0; k < objects.size(); ++k) {
            const int row = slots[k];
            auto* r = f.data.data() + static_cast<std::ptrdiff_t>(row * f.cols);
            r[objects[k].shape] = 1.0f;
            r[n_shapes + objects[k].color] = 1.0f;
            r[n_shapes + n_colors + positions[k % positions.size()]] = 1.0f;
            r[f.cols - 1] = 1.0f;
        }
        std::normal_distribution<double> noise(0.0, cfg_.noise_std);
        for (auto& v : f.data) {
            v += static_cast<float>(noise(rng_));
        }
        return f;
    }

    Object random_object() {
        return {uniform(0, static_cast<int>(cfg_.shapes.size()) - 1),
                uniform(0, static_cast<int>(cfg_.colors.size()) - 1)};
    }

private:
    const SyntheticConfig& cfg_;
    std::mt19937_64& rng_;
};

std::string plural(const std::string& shape) {
    return shape + "s";
}

} // namespace

int SyntheticConfig::d_raw() const {
    return static_cast<int>(shapes.size() + colors.size()) + grid * grid + 1;
}

DatasetSplit generate_synthetic(std::uint64_t seed, int n, const SyntheticConfig& cfg) {
    if (n < 1) {
        throw InvalidArgument("generate_synthetic: n must be >= 1");
    }
    const int n_shapes = static_cast<int>(cfg.shapes.size());
    const int n_colors = static_cast<int>(cfg.colors.size());
    if (n_shapes < 2 || n_colors < 2 || cfg.m < 2 || cfg.grid < 1) {
        throw ConfigError("synthetic world needs >= 2 shapes, >= 2 colours and m >= 2");
    }
    if (cfg.max_count < 1 || cfg.max_count > cfg.m || cfg.max_count >= static_cast<int>(kNumberWords.size())) {
        throw ConfigError("synthetic max_count must lie in [1, min(m, 9)]");
    }

    std::mt19937_64 rng(seed);
    SceneBuilder scene(cfg, rng);
    std::array<int, kTemplateCount> occurrences{};
    const std::array<int, kTemplateCount> answer_counts = {2, n_colors, cfg.max_count + 1};

    DatasetSplit split;
    const auto split_name = std::string(to_string(cfg.split));
    for (int i = 0; i < n; ++i) {
        const int tmpl = scene.uniform(0, kTemplateCount - 1);
        const int occ = occurrences[static_cast<std::size_t>(tmpl)]++;
        const int n_answers = answer_counts[static_cast<std::size_t>(tmpl)];
        const int answer_idx = occ < n_answers ? occ : scene.uniform(0, n_answers - 1);

        std::vector<Object> objects;
        RawSample s;
        const int shape = scene.uniform(0, n_shapes - 1);
        const auto& shape_word = cfg.shapes[static_cast<std::size_t>(shape)];

        if (tmpl == static_cast<int>(QuestionTemplate::exists)) {
            const int color = scene.uniform(0, n_colors - 1);
            const auto& color_word = cfg.colors[static_cast<std::size_t>(color)];
            const bool yes = answer_idx == 0;
            const int k = scene.uniform(1, cfg.m);
            if (yes) {
                objects.push_back({shape, color});
            } else {
                // a near miss sharing shape or colour makes the negative informative
                objects.push_back(scene.uniform(0, 1) == 0 ? Object{shape, scene.other_than(color, n_colors)}
                                                           : Object{scene.other_than(shape, n_shapes), color});
            }
            while (static_cast<int>(objects.size()) < k) {
                auto o = scene.random_object();
                if (!yes && o.shape == shape && o.color == color) {
                    continue;
                }
                objects.push_back(o);
            }
            s.question = "is there a " + color_word + " " + shape_word + " ?";
            s.answer = yes ? "yes" : "no";
            s.explanations = {(yes ? "there is a " : "there is no ") + color_word + " " + shape_word};
        } else if (tmpl == static_cast<int>(QuestionTemplate::color_of)) {
            const int color = answer_idx;
            const auto& color_word = cfg.colors[static_cast<std::size_t>(color)];
            const int k = scene.uniform(1, cfg.m);
            objects.push_back({shape, color});
            while (static_cast<int>(objects.size()) < k) {
                objects.push_back({scene.other_than(shape, n_shapes), scene.uniform(0, n_colors - 1)});
            }
            s.question = "what color is the " + shape_word + " ?";
            s.answer = color_word;
            s.explanations = {"the " + shape_word + " is " + color_word};
        } else {
            const int count = answer_idx;
            const int k = scene.uniform(std::max(count, 1), cfg.m);
            for (int c = 0; c < count; ++c) {
                objects.push_back({shape, scene.uniform(0, n_colors - 1)});
            }
            while (static_cast<int>(objects.size()) < k) {
                objects.push_back({scene.other_than(shape, n_shapes), scene.uniform(0, n_colors - 1)});
            }
            const std::string number = kNumberWords[static_cast<std::size_t>(count)];
            s.question = "how many " + plural(shape_word) + " are there ?";
            s.answer = number;
            if (count == 0) {
                s.explanations = {"there are no " + plural(shape_word)};
            } else if (count == 1) {
                s.explanations = {"there is one " + shape_word};
            } else {
                s.explanations = {"there are " + number + " " + plural(shape_word)};
            }
        }

        char id_buf[64];
        std::snprintf(id_buf, sizeof id_buf, "%s-%s-%05d", cfg.id_prefix.c_str(), split_name.c_str(), i);
        s.sample_id = id_buf;
        std::snprintf(id_buf, sizeof id_buf, "%s-%s-img-%05d", cfg.id_prefix.c_str(), split_name.c_str(), i);
        s.image_ref = id_buf;
        s.split = cfg.split;
        split.feature_store.emplace(s.image_ref, scene.render(std::move(objects)));
        split.samples.push_back(std::move(s));
    }
    return split;
}

std::optional<QuestionTemplate> classify_question(const std::string& question) {
    static const std::regex exists(R"(^is there an? \w+ \w+ \?$)");
    static const std::regex color_of(R"(^what color is the \w+ \?$)");
    static const std::regex count(R"(^how many \w+ are there \?$)");
    if (std::regex_match(question, exists)) {
        return QuestionTemplate::exists;
    }
    if (std::regex_match(question, color_of)) {
        return QuestionTemplate::color_of;
    }
    if (std::regex_match(question, count)) {
        return QuestionTemplate::count;
    }
    return std::nullopt;
}

bool explanation_entails_answer(const std::string& question, const std::string& explanation,
                                const std::string& answer) {
    std::smatch q;
    std::smatch e;
    static const std::regex exists_q(R"(^is there an? (\w+) (\w+) \?$)");
    static const std::regex exists_yes(R"(^there is an? (\w+) (\w+)$)");
    static const std::regex exists_no(R"(^there is no (\w+) (\w+)$)");
    static const std::regex color_q(R"(^what color is the (\w+) \?$)");
    static const std::regex color_e(R"(^the (\w+) is (\w+)$)");
    static const std::regex count_q(R"(^how many (\w+) are there \?$)");
    static const std::regex count_none(R"(^there are no (\w+)$)");
    static const std::regex count_one(R"(^there is one (\w+)$)");
    static const std::regex count_many(R"(^there are (\w+) (\w+)$)");

    if (std::regex_match(question, q, exists_q)) {
        const auto target = q[1].str() + " " + q[2].str();
        if (std::regex_match(explanation, e, exists_yes)) {
            return e[1].str() + " " + e[2].str() == target && answer == "yes";
        }
        if (std::regex_match(explanation, e, exists_no)) {
            return e[1].str() + " " + e[2].str() == target && answer == "no";
        }
        return false;
    }
    if (std::regex_match(question, q, color_q)) {
        return std::regex_match(explanation, e, color_e) && e[1] == q[1] && e[2] == answer;
    }
    if (std::regex_match(question, q, count_q)) {
        const auto plural_shape = q[1].str();
        if (std::regex_match(explanation, e, count_none)) {
            return e[1] == plural_shape && answer == "zero";
        }
        if (std::regex_match(explanation, e, count_one)) {
            return plural(e[1].str()) == plural_shape && answer == "one";
        }
        if (std::regex_match(explanation, e, count_many)) {
            return e[2] == plural_shape && e[1] == answer && answer != "zero" && answer != "one";
        }
        return false;
    }
    return false;
}

} // namespace mcle::data
