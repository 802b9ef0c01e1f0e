// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include "error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace disclvlm {

namespace {

constexpr std::string_view kFormat = "disclvlm-checkpoint";
constexpr int kVersion = 1;

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
    auto p = manifest;
    p.replace_extension(".bin");
    return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    const auto blob = blob_path(path);
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<std::uint32_t> words;
    for (std::size_t i = 0; i < checkpoint.params.size(); ++i) {
        const auto& t = checkpoint.params.tensors[i];
        tensors.push_back({{"name", checkpoint.params.names[i]},
                           {"shape", {t.rows(), t.cols()}},
                           {"offset", words.size() * sizeof(float)},
                           {"bytes", static_cast<std::size_t>(t.size()) * sizeof(float)}});
        for (Eigen::Index k = 0; k < t.size(); ++k) {
            words.push_back(to_little(std::bit_cast<std::uint32_t>(t.data()[k])));
        }
    }
    const nlohmann::json manifest = {{"format", kFormat},
                                     {"version", kVersion},
                                     {"kind", checkpoint.kind},
                                     {"dtype", "float32"},
                                     {"byte_order", "little"},
                                     {"blob", blob.filename().string()},
                                     {"meta", checkpoint.meta},
                                     {"tensors", tensors}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream m(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(m), ErrorCode::kIo, "cannot write " + path.string());
    m << manifest.dump(2) << '\n';
    std::ofstream b(blob, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(b), ErrorCode::kIo, "cannot write " + blob.string());
    b.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    require(static_cast<bool>(m) && static_cast<bool>(b), ErrorCode::kIo,
            "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream m(path, std::ios::binary);
    require(static_cast<bool>(m), ErrorCode::kIo, "cannot open checkpoint " + path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kIo, "malformed checkpoint manifest " + path.string() + ": " + e.what());
    }
    require(manifest.value("format", "") == kFormat && manifest.value("version", 0) == kVersion,
            ErrorCode::kIo, "unsupported checkpoint format in " + path.string());
    const auto blob = path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream b(blob, std::ios::binary | std::ios::ate);
    require(static_cast<bool>(b), ErrorCode::kIo, "cannot open checkpoint blob " + blob.string());
    const auto size = static_cast<std::size_t>(b.tellg());
    b.seekg(0);
    std::vector<char> bytes(size);
    b.read(bytes.data(), static_cast<std::streamsize>(size));

    Checkpoint out;
    out.kind = manifest.at("kind").get<std::string>();
    out.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& t : manifest.at("tensors")) {
        const auto rows = t.at("shape").at(0).get<Eigen::Index>();
        const auto cols = t.at("shape").at(1).get<Eigen::Index>();
        const auto offset = t.at("offset").get<std::size_t>();
        const auto count = static_cast<std::size_t>(rows * cols);
        require(t.at("bytes").get<std::size_t>() == count * sizeof(float) &&
                    offset + count * sizeof(float) <= size,
                ErrorCode::kIo, "checkpoint blob is truncated or inconsistent");
        Mat<float> value(rows, cols);
        for (std::size_t k = 0; k < count; ++k) {
            std::uint32_t w;
            std::memcpy(&w, bytes.data() + offset + k * sizeof(float), sizeof(w));
            value.data()[k] = std::bit_cast<float>(to_little(w));
        }
        out.params.add(t.at("name").get<std::string>(), std::move(value));
    }
    return out;
}

void save_model(const std::filesystem::path& path, const TinyLvlm<float>& model) {
    save_checkpoint(path, Checkpoint{"base", {{"config", model.config()}}, model.params()});
}

TinyLvlm<float> load_model(const std::filesystem::path& path) {
    Checkpoint c = load_checkpoint(path);
    require(c.kind == "base", ErrorCode::kIo, path.string() + " is not a base-model checkpoint");
    ModelConfig config;
    try {
        config = c.meta.at("config").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kIo, std::string("checkpoint config unreadable: ") + e.what());
    }
    return TinyLvlm<float>(config, std::move(c.params));
}

void save_adapters(const std::filesystem::path& path, const AdapterSet<float>& adapters) {
    save_checkpoint(path, Checkpoint{"adapters", adapters.metadata(), adapters.params()});
}

AdapterSet<float> load_adapters(const std::filesystem::path& path, const TinyLvlm<float>& model) {
    Checkpoint c = load_checkpoint(path);
    require(c.kind == "adapters", ErrorCode::kIo, path.string() + " is not an adapter checkpoint");
    return AdapterSet<float>::from_params(model, std::move(c.params), c.meta);
}

}  // namespace disclvlm
