// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/eval/human.hpp"

#include <fstream>
#include <map>

namespace mcle::eval {

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        out += (out.empty() ? "" : "; ") + p;
    }
    return out;
}

} // namespace

ValidationError::ValidationError(std::vector<std::string> field_errors)
    : Error("invalid annotation response: " + join(field_errors)), fields_(std::move(field_errors)) {}

std::optional<Option> parse_option(std::string_view s) {
    if (s == "yes") return Option::yes;
    if (s == "weak_yes") return Option::weak_yes;
    if (s == "weak_no") return Option::weak_no;
    if (s == "no") return Option::no;
    return std::nullopt;
}

std::string_view to_string(Option o) {
    switch (o) {
    case Option::yes: return "yes";
    case Option::weak_yes: return "weak_yes";
    case Option::weak_no: return "weak_no";
    case Option::no: return "no";
    }
    return "?";
}

std::optional<ErrorType> parse_error_type(std::string_view s) {
    if (s == "I") return ErrorType::I;
    if (s == "II") return ErrorType::II;
    if (s == "III") return ErrorType::III;
    return std::nullopt;
}

std::string_view to_string(ErrorType t) {
    switch (t) {
    case ErrorType::I: return "I";
    case ErrorType::II: return "II";
    case ErrorType::III: return "III";
    }
    return "?";
}

double option_score(Option o) {
    switch (o) {
    case Option::yes: return 1.0;
    case Option::weak_yes: return 2.0 / 3.0;
    case Option::weak_no: return 1.0 / 3.0;
    case Option::no: return 0.0;
    }
    return 0.0;
}

void validate(const AnnotationResponse& r) {
    std::vector<std::string> errs;
    if (r.sample_id.empty()) {
        errs.push_back("sample_id: must be a non-empty string");
    }
    if (r.evaluator_id.empty()) {
        errs.push_back("evaluator_id: must be a non-empty string");
    }
    if (unqualified(r.option) && !r.error_type) {
        errs.push_back("error_type: required when option is " + std::string(to_string(r.option)));
    }
    if (!unqualified(r.option) && r.error_type) {
        errs.push_back("error_type: not allowed when option is " + std::string(to_string(r.option)));
    }
    if (!errs.empty()) {
        throw ValidationError(std::move(errs));
    }
}

AnnotationResponse parse_response(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ValidationError({"body: expected a JSON object"});
    }
    std::vector<std::string> errs;
    AnnotationResponse r;
    auto str = [&](const char* key, std::string& out) {
        if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
            errs.push_back(std::string(key) + ": must be a non-empty string");
            return;
        }
        out = j.at(key).get<std::string>();
    };
    str("sample_id", r.sample_id);
    str("evaluator_id", r.evaluator_id);

    bool option_ok = false;
    if (!j.contains("option") || !j.at("option").is_string()) {
        errs.push_back("option: must be one of yes, weak_yes, weak_no, no");
    } else if (auto o = parse_option(j.at("option").get<std::string>())) {
        r.option = *o;
        option_ok = true;
    } else {
        errs.push_back("option: '" + j.at("option").get<std::string>() +
                       "' is not one of yes, weak_yes, weak_no, no");
    }

    const bool has_type = j.contains("error_type") && !j.at("error_type").is_null();
    if (has_type) {
        if (!j.at("error_type").is_string()) {
            errs.push_back("error_type: must be one of I, II, III");
        } else if (auto t = parse_error_type(j.at("error_type").get<std::string>())) {
            r.error_type = *t;
        } else {
            errs.push_back("error_type: '" + j.at("error_type").get<std::string>() + "' is not one of I, II, III");
        }
    }
    if (option_ok && errs.empty()) {
        if (unqualified(r.option) && !has_type) {
            errs.push_back("error_type: required when option is " + std::string(to_string(r.option)));
        }
        if (!unqualified(r.option) && has_type) {
            errs.push_back("error_type: not allowed when option is " + std::string(to_string(r.option)));
        }
    }
    if (!errs.empty()) {
        throw ValidationError(std::move(errs));
    }
    return r;
}

nlohmann::json to_json(const AnnotationResponse& r) {
    nlohmann::json j{{"sample_id", r.sample_id}, {"evaluator_id", r.evaluator_id}, {"option", to_string(r.option)}};
    if (r.error_type) {
        j["error_type"] = to_string(*r.error_type);
    }
    return j;
}

HumanReport aggregate_human(std::span<const AnnotationResponse> responses) {
    if (responses.empty()) {
        throw InvalidArgument("aggregate_human: no responses");
    }
    HumanReport rep;
    std::array<int, 3> counts{};
    double total = 0;
    for (const auto& r : responses) {
        validate(r);
        total += option_score(r.option);
        if (unqualified(r.option)) {
            ++rep.n_unqualified;
            ++counts[static_cast<std::size_t>(*r.error_type)];
        }
    }
    rep.n_responses = static_cast<int>(responses.size());
    rep.human_score = total / rep.n_responses;
    if (rep.n_unqualified > 0) {
        for (std::size_t t = 0; t < 3; ++t) {
            rep.type_fractions[t] = static_cast<double>(counts[t]) / rep.n_unqualified;
        }
    }
    return rep;
}

nlohmann::json to_json(const HumanReport& r) {
    return {{"human_score", r.human_score},
            {"type_fractions", {{"I", r.type_fractions[0]}, {"II", r.type_fractions[1]}, {"III", r.type_fractions[2]}}},
            {"n_responses", r.n_responses},
            {"n_unqualified", r.n_unqualified}};
}

std::vector<AnnotationResponse> read_responses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open responses " + path.string());
    }
    std::vector<AnnotationResponse> out;
    std::map<std::pair<std::string, std::string>, std::size_t> slot;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        AnnotationResponse r;
        try {
            r = parse_response(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto key = std::make_pair(r.sample_id, r.evaluator_id);
        if (auto it = slot.find(key); it != slot.end()) {
            out[it->second] = std::move(r);
        } else {
            slot.emplace(std::move(key), out.size());
            out.push_back(std::move(r));
        }
    }
    return out;
}

void write_responses(const std::filesystem::path& path, std::span<const AnnotationResponse> responses) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write responses " + tmp.string());
        }
        for (const auto& r : responses) {
            out << to_json(r).dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace mcle::eval
