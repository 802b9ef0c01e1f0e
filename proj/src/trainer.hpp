// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: generative pretraining of the base model on long
// captions, then adaptation of soft prompts, low-rank adapters and the logit
// scale with the combined objective while the base stays frozen.

#pragma once

#include "checkpoint.hpp"
#include "objective.hpp"
#include "optimizer.hpp"
#include "scene.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace disclvlm {

enum class Stage { kPretrain, kAdapt };

struct TrainConfig {
    Stage stage = Stage::kAdapt;
    int batch_size = 32;
    int steps = 2000;
    double learning_rate = 2e-3;
    int warmup_steps = 100;
    double min_lr_ratio = 0.1;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global norm; <= 0 disables
    double lambda_ar = 1.0;
    std::uint64_t seed = 0;
    // Fraction of image rows that carry the long-caption turn (adapt stage).
    double short_long_ratio = 1.0;
    // Contrast both image <out_token>s instead of the first only.
    bool contrast_both_out = false;
    // Contrast images against long instead of short captions. A diagnostic
    // configuration: the task becomes nearly trivial and the loss collapses.
    bool contrast_long_captions = false;
    int eval_every = 250;

    void validate() const;  // throws kConfig
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LogRow {
    int step = 0;
    double contrastive = 0.0;
    double ar_ce = 0.0;
    double total = 0.0;
    double temperature = 0.0;
    double learning_rate = 0.0;
};

// CSV columns: step,contrastive,ar_ce,total,temperature
void write_log_csv(std::ostream& out, const std::vector<LogRow>& rows);

// One optimization run over a fixed dataset. Batch composition depends only
// on (seed, step), so a run resumed from saved state continues identically.
class TrainSession {
public:
    // Pretrain: adapters == nullptr and every base parameter is trained.
    // Adapt: base parameters are read-only; trainable adapter groups update.
    TrainSession(TinyLvlm<float>& model, AdapterSet<float>* adapters,
                 const std::vector<DatasetRecord>& data, TrainConfig config);

    LogRow step();
    int steps_done() const { return step_; }
    double running_loss() const { return ema_; }

    AssembledBatch batch_for(int step) const;

    void save_state(const std::filesystem::path& path) const;
    void load_state(const std::filesystem::path& path);

    // Throws kInternal when the frozen base changed since construction.
    void check_frozen_base() const;

private:
    ParamSet<float>& trainable();

    TinyLvlm<float>& model_;
    AdapterSet<float>* adapters_;
    const std::vector<DatasetRecord>& data_;
    TrainConfig config_;
    SceneFeaturizer featurizer_;
    LrSchedule schedule_;
    AdamW<float> optimizer_;
    Gradients<float> grads_;
    std::uint64_t base_hash_ = 0;
    int step_ = 0;
    double ema_ = 0.0;
};

struct TrainHooks {
    std::function<void(const LogRow&)> on_log;
    // Every eval_every steps, with the current model and adapters (null while pretraining).
    std::function<void(int step, const TinyLvlm<float>&, const AdapterSet<float>*)> on_eval;
};

TinyLvlm<float> pretrain(const ModelConfig& model_config, const std::vector<DatasetRecord>& data,
                         const TrainConfig& config, std::vector<LogRow>* log = nullptr,
                         const TrainHooks& hooks = {});

AdapterSet<float> adapt(const TinyLvlm<float>& base, AdapterSet<float> adapters,
                        const std::vector<DatasetRecord>& data, const TrainConfig& config,
                        std::vector<LogRow>* log = nullptr, const TrainHooks& hooks = {});

}  // namespace disclvlm
