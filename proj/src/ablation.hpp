// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Component ablation: each named adapter configuration is trained on top of a
// per-seed pretrained base and evaluated on held-out scenes; rows report
// Replace / Swap / Add accuracy and T2I / I2T R@1 as mean and sd over seeds.

#pragma once

#include "evalsuite.hpp"
#include "trainer.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace disclvlm {

struct AblationConfig {
    std::string name;
    bool soft_prompts = true;
    bool lora = true;
    bool vision_lora = true;
    double lambda_ar = 0.0;
};

void to_json(nlohmann::json& j, const AblationConfig& c);
void from_json(const nlohmann::json& j, AblationConfig& c);

// soft-prompt, adapter, soft-prompt+adapter (contrastive only) and
// soft-prompt+adapter+AR.
std::vector<AblationConfig> default_ablation_configs();

struct EvalSummary {
    double replace = 0.0;
    double swap = 0.0;
    double add = 0.0;
    double t2i = 0.0;
    double i2t = 0.0;
};

struct EvalSettings {
    int gallery_size = 128;
    int compositional_records = 500;
};

// Scores one model (adapters optional) on the held-out split.
EvalSummary summarize(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                      std::span<const DatasetRecord> heldout, const EvalSettings& settings);

struct SeedContext {
    std::uint64_t seed = 0;
    std::vector<DatasetRecord> train;
    std::vector<DatasetRecord> heldout;
    TinyLvlm<float> base;
};

struct AblationSettings {
    ModelConfig model;
    TrainConfig pretrain;
    TrainConfig adapt;
    AdapterOptions peft;
    int n_train = 2000;
    int n_heldout = 500;
    EvalSettings eval;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
};

// Builds the data split and pretrains the base for one seed.
SeedContext prepare_seed(const AblationSettings& settings, std::uint64_t seed);

struct AblationRun {
    std::string config;
    std::uint64_t seed = 0;
    EvalSummary summary;
};

struct AblationRow {
    std::string config;
    EvalSummary mean;
    EvalSummary sd;  // sample standard deviation over seeds
    int seeds = 0;
};

struct AblationReport {
    std::vector<AblationRun> zero_shot;  // base model, hard prompts
    std::vector<AblationRun> runs;
    std::vector<AblationRow> rows;       // one per config, in input order
};

struct AblationHooks {
    // Called after each adaptation run with the trained adapters.
    std::function<void(const SeedContext&, const AblationConfig&, const AdapterSet<float>&,
                       const std::vector<LogRow>&)>
        on_run;
    // Called once the base of a seed is pretrained, before any adaptation.
    std::function<void(const SeedContext&)> on_seed;
    std::function<void(const std::string&)> on_progress;
};

AblationReport ablation_suite(std::span<const AblationConfig> configs,
                              const AblationSettings& settings, const AblationHooks& hooks = {});

// Mean and sample sd per metric.
AblationRow aggregate_runs(const std::string& config, std::span<const AblationRun> runs);

// Swap-accuracy gain of adding the AR term: the first pair of configs that
// differ only in lambda_ar (zero vs positive). Passed when the mean gain
// exceeds the pooled sample sd sqrt((sd0^2 + sd1^2) / 2).
struct ArMargin {
    std::string without_ar;
    std::string with_ar;
    double swap_without = 0.0;
    double swap_with = 0.0;
    double margin = 0.0;
    double pooled_sd = 0.0;
    bool passed = false;
};

std::optional<ArMargin> ar_margin(std::span<const AblationConfig> configs,
                                  const AblationReport& report);

nlohmann::json to_json(const AblationReport& report);
nlohmann::json to_json(const ArMargin& margin);
// Columns: config,replace,replace_sd,swap,swap_sd,add,add_sd,t2i,t2i_sd,i2t,i2t_sd,seeds
void write_ablation_csv(std::ostream& out, const AblationReport& report);

}  // namespace disclvlm
