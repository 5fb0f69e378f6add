// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned single-file archive of named arrays plus a JSON header.
//
//   line 1:  MCLE-CKPT-1
//   line 2:  header JSON (one line), including an "arrays" table
//   rest:    array payloads, little-endian float64, in table order

#pragma once

#include "mcle/ad/tape.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mcle::model {

inline constexpr std::string_view kCheckpointMagic = "MCLE-CKPT-1";

struct NamedArray {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major
};

struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(std::string_view name) const;
};

// Written to a temporary sibling and renamed, so a crash never leaves a
// half-written checkpoint under `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws ParseError on a bad magic line, header or truncated payload.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stores every parameter as "<prefix><name>". float values widen exactly.
template <typename Real>
void put_store(Checkpoint& ckpt, const std::string& prefix, const ad::ParameterStore<Real>& store);
// Rebuilds a store from every array whose name starts with `prefix`, in
// archive order.
template <typename Real>
ad::ParameterStore<Real> get_store(const Checkpoint& ckpt, const std::string& prefix);

} // namespace mcle::model
