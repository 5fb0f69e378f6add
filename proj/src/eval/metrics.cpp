// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/eval/metrics.hpp"

#include "mcle/common/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mcle::eval {

namespace {

constexpr int kMaxN = 4;
constexpr double kCiderSigma = 6.0;
constexpr double kRougeBeta = 1.2;

// ngram -> count, one map per order; keys join words with '\x1f'.
using NgramCounts = std::array<std::map<std::string, int>, kMaxN>;

NgramCounts count_ngrams(const Tokens& words) {
    NgramCounts out;
    for (int n = 1; n <= kMaxN; ++n) {
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
            std::string key = words[i];
            for (int k = 1; k < n; ++k) {
                key += '\x1f';
                key += words[i + static_cast<std::size_t>(k)];
            }
            ++out[static_cast<std::size_t>(n - 1)][key];
        }
    }
    return out;
}

void check_corpus(std::span<const Tokens> candidates, std::span<const References> references, const char* who) {
    if (candidates.empty()) {
        throw InvalidArgument(std::string(who) + ": empty candidate list");
    }
    if (candidates.size() != references.size()) {
        throw InvalidArgument(std::string(who) + ": candidate and reference lists differ in length");
    }
    for (const auto& r : references) {
        if (r.empty()) {
            throw InvalidArgument(std::string(who) + ": empty reference set");
        }
    }
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

bool is_punct(unsigned char c) {
    return std::ispunct(c) != 0;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

Tokens split_words(const std::string& s) {
    std::istringstream in(s);
    Tokens out;
    for (std::string w; in >> w;) {
        out.push_back(std::move(w));
    }
    return out;
}

} // namespace

Tokens metric_tokens(std::string_view text) {
    std::string s = lower(text);
    for (auto& c : s) {
        if (is_punct(static_cast<unsigned char>(c))) {
            c = ' ';
        }
    }
    return split_words(s);
}

double bleu4(std::span<const Tokens> candidates, std::span<const References> references) {
    check_corpus(candidates, references, "bleu4");
    std::array<double, kMaxN> correct{}, guess{};
    double test_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        const auto len = static_cast<long>(cand.size());
        long closest = -1;
        NgramCounts max_ref;
        for (const auto& ref : references[s]) {
            const auto rl = static_cast<long>(ref.size());
            if (closest < 0 || std::abs(rl - len) < std::abs(closest - len) ||
                (std::abs(rl - len) == std::abs(closest - len) && rl < closest)) {
                closest = rl;
            }
            const auto counts = count_ngrams(ref);
            for (int n = 0; n < kMaxN; ++n) {
                for (const auto& [g, c] : counts[static_cast<std::size_t>(n)]) {
                    auto& m = max_ref[static_cast<std::size_t>(n)][g];
                    m = std::max(m, c);
                }
            }
        }
        test_len += static_cast<double>(len);
        ref_len += static_cast<double>(closest);
        const auto counts = count_ngrams(cand);
        for (int n = 0; n < kMaxN; ++n) {
            guess[static_cast<std::size_t>(n)] += static_cast<double>(std::max(0L, len - n));
            const auto& refs_n = max_ref[static_cast<std::size_t>(n)];
            for (const auto& [g, c] : counts[static_cast<std::size_t>(n)]) {
                auto it = refs_n.find(g);
                if (it != refs_n.end()) {
                    correct[static_cast<std::size_t>(n)] += std::min(c, it->second);
                }
            }
        }
    }
    double log_sum = 0;
    for (int n = 0; n < kMaxN; ++n) {
        if (correct[static_cast<std::size_t>(n)] == 0) {
            return 0.0;
        }
        log_sum += std::log(correct[static_cast<std::size_t>(n)] / guess[static_cast<std::size_t>(n)]);
    }
    double bleu = std::exp(log_sum / kMaxN);
    if (test_len < ref_len) {
        bleu *= std::exp(1.0 - ref_len / test_len);
    }
    return bleu;
}

std::vector<double> rouge_l_scores(std::span<const Tokens> candidates, std::span<const References> references) {
    check_corpus(candidates, references, "rouge_l");
    std::vector<double> out;
    out.reserve(candidates.size());
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& cand = candidates[s];
        double p_max = 0, r_max = 0;
        for (const auto& ref : references[s]) {
            if (cand.empty() || ref.empty()) {
                continue;
            }
            const auto lcs = static_cast<double>(lcs_length(cand, ref));
            p_max = std::max(p_max, lcs / static_cast<double>(cand.size()));
            r_max = std::max(r_max, lcs / static_cast<double>(ref.size()));
        }
        const double b2 = kRougeBeta * kRougeBeta;
        out.push_back(p_max > 0 && r_max > 0 ? (1 + b2) * p_max * r_max / (r_max + b2 * p_max) : 0.0);
    }
    return out;
}

double rouge_l(std::span<const Tokens> candidates, std::span<const References> references) {
    const auto s = rouge_l_scores(candidates, references);
    double sum = 0;
    for (double x : s) {
        sum += x;
    }
    return sum / static_cast<double>(s.size());
}

std::vector<double> cider_d_scores(std::span<const Tokens> candidates, std::span<const References> references) {
    check_corpus(candidates, references, "cider_d");
    if (candidates.size() < 2) {
        throw InvalidArgument("cider_d: needs at least two samples for document frequencies");
    }
    std::vector<std::vector<NgramCounts>> ref_counts(references.size());
    std::unordered_map<std::string, double> df;
    for (std::size_t s = 0; s < references.size(); ++s) {
        std::set<std::string> seen;
        for (const auto& ref : references[s]) {
            ref_counts[s].push_back(count_ngrams(ref));
            for (const auto& order : ref_counts[s].back()) {
                for (const auto& [g, c] : order) {
                    seen.insert(g);
                }
            }
        }
        for (const auto& g : seen) {
            df[g] += 1;
        }
    }
    const double log_n = std::log(static_cast<double>(references.size()));

    struct Vec {
        std::array<std::map<std::string, double>, kMaxN> w;
        std::array<double, kMaxN> norm{};
        int length = 0;  // bigram count, as the reference implementation does
    };
    auto to_vec = [&](const NgramCounts& counts) {
        Vec v;
        for (int n = 0; n < kMaxN; ++n) {
            for (const auto& [g, tf] : counts[static_cast<std::size_t>(n)]) {
                auto it = df.find(g);
                const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
                const double x = tf * (log_n - d);
                v.w[static_cast<std::size_t>(n)][g] = x;
                v.norm[static_cast<std::size_t>(n)] += x * x;
                if (n == 1) {
                    v.length += tf;
                }
            }
            v.norm[static_cast<std::size_t>(n)] = std::sqrt(v.norm[static_cast<std::size_t>(n)]);
        }
        return v;
    };

    std::vector<double> out;
    out.reserve(candidates.size());
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto hyp = to_vec(count_ngrams(candidates[s]));
        std::array<double, kMaxN> acc{};
        for (const auto& rc : ref_counts[s]) {
            const auto ref = to_vec(rc);
            const double delta = hyp.length - ref.length;
            const double penalty = std::exp(-(delta * delta) / (2 * kCiderSigma * kCiderSigma));
            for (int n = 0; n < kMaxN; ++n) {
                const auto& hw = hyp.w[static_cast<std::size_t>(n)];
                const auto& rw = ref.w[static_cast<std::size_t>(n)];
                double val = 0;
                for (const auto& [g, x] : hw) {
                    auto it = rw.find(g);
                    if (it != rw.end()) {
                        val += std::min(x, it->second) * it->second;
                    }
                }
                const double nh = hyp.norm[static_cast<std::size_t>(n)];
                const double nr = ref.norm[static_cast<std::size_t>(n)];
                if (nh != 0 && nr != 0) {
                    val /= nh * nr;
                }
                acc[static_cast<std::size_t>(n)] += val * penalty;
            }
        }
        double mean = 0;
        for (double a : acc) {
            mean += a;
        }
        mean /= kMaxN;
        out.push_back(10.0 * mean / static_cast<double>(ref_counts[s].size()));
    }
    return out;
}

double cider_d(std::span<const Tokens> candidates, std::span<const References> references) {
    const auto s = cider_d_scores(candidates, references);
    double sum = 0;
    for (double x : s) {
        sum += x;
    }
    return sum / static_cast<double>(s.size());
}

std::string normalize_answer(std::string_view answer) {
    std::string s = lower(answer);
    std::string cleaned;
    for (char c : s) {
        if (c == '\'') {
            continue;
        }
        cleaned += is_punct(static_cast<unsigned char>(c)) ? ' ' : c;
    }
    auto words = split_words(cleaned);
    std::size_t start = 0;
    while (start + 1 < words.size() && (words[start] == "a" || words[start] == "an" || words[start] == "the")) {
        ++start;
    }
    std::string out;
    for (std::size_t i = start; i < words.size(); ++i) {
        if (!out.empty()) {
            out += ' ';
        }
        out += words[i];
    }
    return out;
}

bool answers_match(std::string_view predicted, std::string_view gold, AnswerMatch match) {
    if (match == AnswerMatch::exact) {
        return predicted == gold;
    }
    return normalize_answer(predicted) == normalize_answer(gold);
}

namespace {

std::vector<const data::RawSample*> resolve(std::span<const PredictionRecord> preds, const data::DatasetSplit& split) {
    std::vector<const data::RawSample*> out;
    std::vector<std::string> missing;
    for (const auto& p : preds) {
        const auto* s = split.find(p.sample_id);
        if (s == nullptr) {
            missing.push_back(p.sample_id);
        }
        out.push_back(s);
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
            list += (i ? ", " : "") + missing[i];
        }
        if (missing.size() > 10) {
            list += ", ...";
        }
        throw InvalidArgument(std::to_string(missing.size()) + " prediction(s) do not resolve: " + list);
    }
    return out;
}

} // namespace

double answer_accuracy(std::span<const PredictionRecord> preds, const data::DatasetSplit& split, AnswerMatch match) {
    if (preds.empty()) {
        throw InvalidArgument("answer_accuracy: no predictions");
    }
    const auto gold = resolve(preds, split);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        correct += answers_match(preds[i].answer, gold[i]->answer, match) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Mode parse_mode(std::string_view s) {
    if (s == "unfiltered") {
        return Mode::unfiltered;
    }
    if (s == "filtered") {
        return Mode::filtered;
    }
    throw InvalidArgument("unknown evaluation mode '" + std::string(s) + "' (expected filtered|unfiltered)");
}

std::string_view to_string(Mode m) {
    return m == Mode::filtered ? "filtered" : "unfiltered";
}

MetricReport evaluate_split(std::span<const PredictionRecord> preds, const data::DatasetSplit& split, Mode mode,
                            AnswerMatch match) {
    const auto gold = resolve(preds, split);
    std::set<std::string> ids;
    for (const auto& p : preds) {
        if (!ids.insert(p.sample_id).second) {
            throw InvalidArgument("duplicate prediction for " + p.sample_id);
        }
    }
    if (ids.size() != split.size()) {
        throw InvalidArgument("predictions cover " + std::to_string(ids.size()) + " of " +
                              std::to_string(split.size()) + " samples");
    }

    MetricReport r;
    r.mode = mode;
    r.n_predictions = static_cast<int>(preds.size());
    r.accuracy = answer_accuracy(preds, split, match);

    std::vector<Tokens> cands;
    std::vector<References> refs;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (mode == Mode::filtered && !answers_match(preds[i].answer, gold[i]->answer, match)) {
            continue;
        }
        References rs;
        for (const auto& e : gold[i]->explanations) {
            rs.push_back(metric_tokens(e));
        }
        if (rs.empty()) {
            throw InvalidArgument("sample " + preds[i].sample_id + " has no reference explanation");
        }
        cands.push_back(metric_tokens(preds[i].explanation));
        refs.push_back(std::move(rs));
    }
    r.n_evaluated = static_cast<int>(cands.size());
    if (!cands.empty()) {
        r.bleu4 = bleu4(cands, refs);
        r.rouge_l = rouge_l(cands, refs);
        // document frequencies are undefined for a single sample
        if (cands.size() >= 2) {
            r.cider = cider_d(cands, refs);
        }
    }
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"bleu4", opt(r.bleu4)},
            {"rouge_l", opt(r.rouge_l)},
            {"cider", opt(r.cider)},
            {"accuracy", r.accuracy},
            {"mode", std::string(to_string(r.mode))},
            {"n_evaluated", r.n_evaluated},
            {"n_predictions", r.n_predictions}};
}

MetricReport report_from_json(const nlohmann::json& j) {
    auto opt = [&](const char* k) -> std::optional<double> {
        if (!j.contains(k) || j.at(k).is_null()) {
            return std::nullopt;
        }
        return j.at(k).get<double>();
    };
    try {
        MetricReport r;
        r.bleu4 = opt("bleu4");
        r.rouge_l = opt("rouge_l");
        r.cider = opt("cider");
        r.accuracy = j.at("accuracy").get<double>();
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.n_evaluated = j.at("n_evaluated").get<int>();
        r.n_predictions = j.value("n_predictions", 0);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad metric report: ") + e.what());
    }
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write predictions " + path.string());
    }
    for (const auto& p : preds) {
        out << nlohmann::json{{"sample_id", p.sample_id}, {"explanation", p.explanation}, {"answer", p.answer}}.dump()
            << '\n';
    }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open predictions " + path.string());
    }
    std::vector<PredictionRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            PredictionRecord p;
            p.sample_id = j.at("sample_id").get<std::string>();
            p.explanation = j.contains("explanation") ? j.at("explanation").get<std::string>()
                                                      : j.at("generated_explanation").get<std::string>();
            p.answer = j.contains("answer") ? j.at("answer").get<std::string>()
                                            : j.at("generated_answer").get<std::string>();
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace mcle::eval
