// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Human evaluation responses and their aggregation.

#pragma once

#include "mcle/common/error.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcle::eval {

enum class Option { yes, weak_yes, weak_no, no };
enum class ErrorType { I, II, III };

std::optional<Option> parse_option(std::string_view s);
std::string_view to_string(Option o);
std::optional<ErrorType> parse_error_type(std::string_view s);
std::string_view to_string(ErrorType t);

// yes 1, weak_yes 2/3, weak_no 1/3, no 0
double option_score(Option o);
inline bool unqualified(Option o) {
    return o == Option::weak_no || o == Option::no;
}

// Carries one message per offending field.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> field_errors);
    const std::vector<std::string>& field_errors() const { return fields_; }

private:
    std::vector<std::string> fields_;
};

struct AnnotationResponse {
    std::string sample_id;
    std::string evaluator_id;
    Option option = Option::yes;
    std::optional<ErrorType> error_type;  // present iff the option is unqualified

    bool operator==(const AnnotationResponse&) const = default;
};

// Throws ValidationError listing every bad field, including a missing or
// superfluous error_type.
AnnotationResponse parse_response(const nlohmann::json& j);
void validate(const AnnotationResponse& r);
nlohmann::json to_json(const AnnotationResponse& r);

struct HumanReport {
    double human_score = 0;
    // Fractions of the unqualified responses that carry Type I, II, III.
    std::array<double, 3> type_fractions{};
    int n_responses = 0;
    int n_unqualified = 0;
};

HumanReport aggregate_human(std::span<const AnnotationResponse> responses);
nlohmann::json to_json(const HumanReport& r);

// JSON lines; a later line for the same (sample_id, evaluator_id) replaces
// the earlier one.
std::vector<AnnotationResponse> read_responses(const std::filesystem::path& path);
void write_responses(const std::filesystem::path& path, std::span<const AnnotationResponse> responses);

} // namespace mcle::eval
