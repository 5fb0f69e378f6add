// Copyright (c) 2026, The MCLE Authors
// SPDX-License-Identifier: Apache-2.0

#include "mcle/model/checkpoint.hpp"

#include "mcle/common/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mcle::model {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

const NamedArray* Checkpoint::find(std::string_view name) const {
    for (const auto& a : arrays) {
        if (a.name == name) {
            return &a;
        }
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header = ckpt.header;
    auto table = nlohmann::json::array();
    for (const auto& a : ckpt.arrays) {
        if (a.data.size() != static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols)) {
            throw InvalidArgument("checkpoint array " + a.name + " has inconsistent shape");
        }
        table.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});
    }
    header["arrays"] = std::move(table);

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write checkpoint " + tmp.string());
        }
        out << kCheckpointMagic << '\n' << header.dump() << '\n';
        for (const auto& a : ckpt.arrays) {
            out.write(reinterpret_cast<const char*>(a.data.data()),
                      static_cast<std::streamsize>(a.data.size() * sizeof(double)));
        }
        if (!out) {
            throw ConfigError("failed writing checkpoint " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open checkpoint " + path.string());
    }
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) {
        throw ParseError(path.string() + " is not an " + std::string(kCheckpointMagic) + " checkpoint");
    }
    std::string header_line;
    std::getline(in, header_line);
    Checkpoint ckpt;
    try {
        ckpt.header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
    }
    if (!ckpt.header.contains("arrays") || !ckpt.header["arrays"].is_array()) {
        throw ParseError(path.string() + ": checkpoint header has no array table");
    }
    for (const auto& entry : ckpt.header["arrays"]) {
        NamedArray a;
        try {
            a.name = entry.at("name").get<std::string>();
            a.rows = entry.at("rows").get<int>();
            a.cols = entry.at("cols").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": bad array table entry: " + e.what());
        }
        if (a.rows < 0 || a.cols < 0) {
            throw ParseError(path.string() + ": negative shape for array " + a.name);
        }
        a.data.resize(static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols));
        in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
        if (!in) {
            throw ParseError(path.string() + ": truncated payload at array " + a.name);
        }
        ckpt.arrays.push_back(std::move(a));
    }
    ckpt.header.erase("arrays");
    return ckpt;
}

template <typename Real>
void put_store(Checkpoint& ckpt, const std::string& prefix, const ad::ParameterStore<Real>& store) {
    for (const auto& p : store) {
        NamedArray a;
        a.name = prefix + p.name;
        a.rows = static_cast<int>(p.value.rows());
        a.cols = static_cast<int>(p.value.cols());
        a.data.resize(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            a.data[static_cast<std::size_t>(i)] = static_cast<double>(p.value.data()[i]);
        }
        ckpt.arrays.push_back(std::move(a));
    }
}

template <typename Real>
ad::ParameterStore<Real> get_store(const Checkpoint& ckpt, const std::string& prefix) {
    ad::ParameterStore<Real> store;
    for (const auto& a : ckpt.arrays) {
        if (a.name.compare(0, prefix.size(), prefix) != 0) {
            continue;
        }
        ad::Matrix<Real> m(a.rows, a.cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<Real>(a.data[static_cast<std::size_t>(i)]);
        }
        store.add(a.name.substr(prefix.size()), std::move(m));
    }
    return store;
}

template void put_store<float>(Checkpoint&, const std::string&, const ad::ParameterStore<float>&);
template void put_store<double>(Checkpoint&, const std::string&, const ad::ParameterStore<double>&);
template ad::ParameterStore<float> get_store<float>(const Checkpoint&, const std::string&);
template ad::ParameterStore<double> get_store<double>(const Checkpoint&, const std::string&);

} // namespace mcle::model
