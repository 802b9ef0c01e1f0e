// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoints are a UTF-8 JSON manifest (<stem>.json: kind, metadata, and per
// tensor name, shape and byte offset) next to a blob of little-endian float32
// values in row-major order (<stem>.bin). Base weights and adapters are
// written as separate checkpoints so either can be loaded on its own.

#pragma once

#include "model.hpp"
#include "peft.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace disclvlm {

struct Checkpoint {
    std::string kind;  // "base", "adapters", "train-state"
    nlohmann::json meta = nlohmann::json::object();
    ParamSet<float> params;
};

// path is the manifest path; the blob goes next to it with extension .bin.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const TinyLvlm<float>& model);
TinyLvlm<float> load_model(const std::filesystem::path& path);

void save_adapters(const std::filesystem::path& path, const AdapterSet<float>& adapters);
AdapterSet<float> load_adapters(const std::filesystem::path& path, const TinyLvlm<float>& model);

}  // namespace disclvlm
