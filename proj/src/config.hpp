// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Project configuration. Layering: built-in defaults < JSON config file <
// DISC_LVLM_* environment variables < command-line flags. The effective
// configuration is written next to every run's outputs and reloading it
// reproduces the run.

#pragma once

#include "ablation.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace disclvlm {

struct DataConfig {
    int n_train = 2000;
    int n_heldout = 500;
    std::string dataset;  // JSONL path; generated from the seed when empty
};

struct PeftConfig {
    bool soft_prompts = true;
    bool lora = true;
    bool vision_lora = true;
    int rank = 8;
    double alpha = 16.0;
    double init_sigma = 0.02;
    double init_temperature = 0.07;
    std::string image_prompt{kDefaultImagePrompt};
    std::string text_prompt{kDefaultTextPrompt};
};

struct EvalConfig {
    std::vector<int> gallery_sizes = {64, 128};
    std::vector<int> ks = {1, 5, 10};
    int compositional_records = 500;
};

struct DiagnosticsConfig {
    int probe_pairs = 50;
    int attention_rows = 64;
    int top_k = 5;
    std::string prompts;  // JSON prompt list; built-in set when empty
};

struct AblateConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<AblationConfig> configs = default_ablation_configs();
};

struct ProjectConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";
    ModelConfig model;
    DataConfig data;
    TrainConfig pretrain;
    TrainConfig adapt;
    PeftConfig peft;
    EvalConfig eval;
    DiagnosticsConfig diagnostics;
    AblateConfig ablate;

    ProjectConfig();
    void validate() const;  // throws kConfig

    // Seeds of every component follow the global seed.
    ModelConfig model_config() const;
    TrainConfig pretrain_config() const;
    TrainConfig adapt_config() const;
    AdapterOptions adapter_options() const;
    AblationSettings ablation_settings() const;
};

nlohmann::json to_json(const ProjectConfig& c);
// Unknown keys are rejected so that typos surface as configuration errors.
ProjectConfig from_json(const nlohmann::json& j, ProjectConfig base = {});

// Command-line and environment overrides; unset fields leave the config alone.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> n;
    std::optional<int> steps;
    std::optional<double> lambda_ar;
    std::optional<int> gallery_size;
    std::optional<std::string> prompts;
    std::optional<std::string> dataset;  // training JSONL instead of generated scenes
    std::optional<std::string> out;      // gen-data output file
};

nlohmann::json to_json(const Overrides& o);
Overrides overrides_from_json(const nlohmann::json& j);
// Reads DISC_LVLM_SEED, _OUT_DIR, _N, _STEPS, _LAMBDA_AR, _GALLERY_SIZE, _PROMPTS, _DATA.
Overrides overrides_from_env();

// --steps targets the stage of the running subcommand ("pretrain", "adapt",
// or both for "ablate").
void apply(ProjectConfig& config, const Overrides& o, const std::string& subcommand);

ProjectConfig load_config(const std::string& path);

}  // namespace disclvlm
