// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

namespace disclvlm {

namespace {

std::string_view stage_name(Stage s) { return s == Stage::kPretrain ? "pretrain" : "adapt"; }

constexpr double kEmaDecay = 0.98;

}  // namespace

void TrainConfig::validate() const {
    require(steps >= 0, ErrorCode::kConfig, "steps must be non-negative");
    require(batch_size >= (stage == Stage::kAdapt ? 2 : 1), ErrorCode::kConfig,
            "adapt needs batch_size >= 2 for in-batch negatives");
    require(learning_rate > 0.0 && warmup_steps >= 0 && min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0,
            ErrorCode::kConfig, "invalid learning-rate schedule");
    require(lambda_ar >= 0.0, ErrorCode::kConfig, "lambda_ar must be non-negative");
    require(short_long_ratio >= 0.0 && short_long_ratio <= 1.0, ErrorCode::kConfig,
            "short_long_ratio must lie in [0, 1]");
    require(eval_every >= 1, ErrorCode::kConfig, "eval_every must be positive");
    require(weight_decay >= 0.0, ErrorCode::kConfig, "weight_decay must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"stage", stage_name(c.stage)},
         {"batch_size", c.batch_size},
         {"steps", c.steps},
         {"learning_rate", c.learning_rate},
         {"warmup_steps", c.warmup_steps},
         {"min_lr_ratio", c.min_lr_ratio},
         {"weight_decay", c.weight_decay},
         {"grad_clip", c.grad_clip},
         {"lambda_ar", c.lambda_ar},
         {"seed", c.seed},
         {"short_long_ratio", c.short_long_ratio},
         {"contrast_both_out", c.contrast_both_out},
         {"contrast_long_captions", c.contrast_long_captions},
         {"eval_every", c.eval_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("stage")) {
        const auto s = j.at("stage").get<std::string>();
        require(s == "pretrain" || s == "adapt", ErrorCode::kConfig, "unknown stage '" + s + "'");
        c.stage = s == "pretrain" ? Stage::kPretrain : Stage::kAdapt;
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.lambda_ar = j.value("lambda_ar", c.lambda_ar);
    c.seed = j.value("seed", c.seed);
    c.short_long_ratio = j.value("short_long_ratio", c.short_long_ratio);
    c.contrast_both_out = j.value("contrast_both_out", c.contrast_both_out);
    c.contrast_long_captions = j.value("contrast_long_captions", c.contrast_long_captions);
    c.eval_every = j.value("eval_every", c.eval_every);
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& rows) {
    out << "step,contrastive,ar_ce,total,temperature\n";
    for (const auto& r : rows) {
        out << r.step << ',' << r.contrastive << ',' << r.ar_ce << ',' << r.total << ','
            << r.temperature << '\n';
    }
}

TrainSession::TrainSession(TinyLvlm<float>& model, AdapterSet<float>* adapters,
                           const std::vector<DatasetRecord>& data, TrainConfig config)
    : model_(model),
      adapters_(adapters),
      data_(data),
      config_(config),
      featurizer_(model.config().vision_feature_dim) {
    config_.stage = adapters_ == nullptr ? Stage::kPretrain : Stage::kAdapt;
    config_.validate();
    require(!data_.empty(), ErrorCode::kConfig, "training needs a non-empty dataset");
    schedule_ = LrSchedule{config_.learning_rate, config_.warmup_steps, config_.steps,
                           config_.min_lr_ratio};
    AdamWOptions o;
    o.weight_decay = config_.weight_decay;
    optimizer_ = AdamW<float>(trainable(), o);
    grads_ = Gradients<float>::for_training(model_, adapters_, adapters_ == nullptr);
    base_hash_ = model_.params().hash();
}

ParamSet<float>& TrainSession::trainable() {
    return adapters_ == nullptr ? model_.params() : adapters_->params();
}

AssembledBatch TrainSession::batch_for(int step) const {
    Rng rng = make_rng(config_.seed, "batch", {static_cast<std::uint64_t>(step)});
    // Partial Fisher-Yates: b distinct records.
    const std::size_t n = data_.size();
    const std::size_t b = std::min(n, static_cast<std::size_t>(config_.batch_size));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
        std::swap(order[i], order[j]);
    }

    TemplateOptions o;
    o.mode = TemplateMode::kTraining;
    o.max_seq_len = model_.config().max_seq_len;
    o.num_vision_tokens = model_.config().num_vision_tokens;
    if (adapters_ == nullptr) {
        AssembledBatch batch;
        for (std::size_t i = 0; i < b; ++i) {
            const auto& r = data_[order[i]];
            batch.features.push_back(featurizer_.featurize(r.scene));
            TemplateRow row = build_image_row(static_cast<int>(batch.features.size()) - 1,
                                              r.captions.long_tokens, o);
            row.source = r.scene.seed;
            batch.rows.push_back(std::move(row));
        }
        return batch;
    }
    o.soft_image_prompt = adapters_->prompt(Modality::kImage).has_value();
    o.soft_text_prompt = adapters_->prompt(Modality::kText).has_value();
    o.long_text_rows = config_.contrast_long_captions;
    std::vector<CollateItem> items;
    for (std::size_t i = 0; i < b; ++i) {
        const auto& r = data_[order[i]];
        const bool with_long = config_.lambda_ar > 0.0 && uniform01(rng) < config_.short_long_ratio;
        items.push_back({&r.scene, &r.captions, with_long});
    }
    if (config_.lambda_ar > 0.0 &&
        std::none_of(items.begin(), items.end(), [](const auto& it) { return it.with_long; })) {
        items.front().with_long = true;
    }
    return collate(items, featurizer_, o);
}

LogRow TrainSession::step() {
    const AssembledBatch batch = batch_for(step_);
    ObjectiveOptions obj;
    if (adapters_ == nullptr) {
        obj.contrastive = false;
        obj.lambda_ar = 1.0;
    } else {
        obj.contrastive = true;
        obj.lambda_ar = config_.lambda_ar;
        obj.both_out = config_.contrast_both_out;
    }
    grads_.set_zero();
    LossValue loss;
    try {
        loss = evaluate_objective(model_, adapters_, batch, obj, &grads_);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        fail(ErrorCode::kDivergence, std::string(stage_name(config_.stage)) + " diverged at step " +
                                         std::to_string(step_) + ": " + e.what());
    }
    if (!std::isfinite(loss.total)) {
        fail(ErrorCode::kDivergence, std::string(stage_name(config_.stage)) + " diverged at step " +
                                         std::to_string(step_) + ": contrastive=" +
                                         std::to_string(loss.contrastive) +
                                         " ar_ce=" + std::to_string(loss.ar_ce));
    }

    ParamSet<float>& params = trainable();
    ParamSet<float>& grads = adapters_ == nullptr ? grads_.model : grads_.adapters;
    auto update = [&](int i) { return adapters_ == nullptr || adapters_->is_trainable(i); };
    double norm2 = 0.0;
    for (int i = 0; i < static_cast<int>(grads.size()); ++i) {
        if (update(i)) norm2 += static_cast<double>(grads[i].squaredNorm());
    }
    require(std::isfinite(norm2), ErrorCode::kDivergence,
            "non-finite gradient at step " + std::to_string(step_));
    const double norm = std::sqrt(norm2);
    if (config_.grad_clip > 0.0 && norm > config_.grad_clip) {
        const float s = static_cast<float>(config_.grad_clip / norm);
        for (auto& g : grads.tensors) g *= s;
    }
    const double lr = schedule_.at(step_);
    optimizer_.step(params, grads, lr, update, [&](int i) {
        return decay_eligible(params.names[static_cast<std::size_t>(i)], params[i].rows());
    });
    require(params.all_finite(), ErrorCode::kDivergence,
            "parameters became non-finite at step " + std::to_string(step_));

    ema_ = step_ == 0 ? loss.total : kEmaDecay * ema_ + (1.0 - kEmaDecay) * loss.total;
    LogRow row{step_,
               loss.contrastive,
               loss.ar_ce,
               loss.total,
               adapters_ != nullptr ? 1.0 / static_cast<double>(adapters_->logit_scale()) : 0.0,
               lr};
    ++step_;
    if (adapters_ != nullptr && step_ % config_.eval_every == 0) check_frozen_base();
    return row;
}

void TrainSession::check_frozen_base() const {
    if (adapters_ == nullptr) return;
    require(model_.params().hash() == base_hash_, ErrorCode::kInternal,
            "frozen base parameters changed during adaptation");
}

void TrainSession::save_state(const std::filesystem::path& path) const {
    Checkpoint c;
    c.kind = "train-state";
    c.meta = {{"step", step_},
              {"optimizer_steps", optimizer_.steps()},
              {"ema", ema_},
              {"config", config_},
              {"base_hash", std::to_string(base_hash_)}};
    const auto& m = optimizer_.first_moment();
    const auto& v = optimizer_.second_moment();
    for (std::size_t i = 0; i < m.size(); ++i) {
        c.params.add("adam.m/" + m.names[i], m.tensors[i]);
        c.params.add("adam.v/" + v.names[i], v.tensors[i]);
    }
    save_checkpoint(path, c);
}

void TrainSession::load_state(const std::filesystem::path& path) {
    Checkpoint c = load_checkpoint(path);
    require(c.kind == "train-state", ErrorCode::kIo, path.string() + " is not a training state");
    const ParamSet<float>& params = trainable();
    ParamSet<float> m;
    ParamSet<float> v;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.names[i];
        const auto& mm = c.params[c.params.index("adam.m/" + name)];
        const auto& vv = c.params[c.params.index("adam.v/" + name)];
        require(mm.rows() == params.tensors[i].rows() && mm.cols() == params.tensors[i].cols(),
                ErrorCode::kShape, "optimizer moment shape mismatch for " + name);
        m.add(name, mm);
        v.add(name, vv);
    }
    optimizer_.restore(c.meta.at("optimizer_steps").get<long long>(), std::move(m), std::move(v));
    step_ = c.meta.at("step").get<int>();
    ema_ = c.meta.at("ema").get<double>();
}

TinyLvlm<float> pretrain(const ModelConfig& model_config, const std::vector<DatasetRecord>& data,
                         const TrainConfig& config, std::vector<LogRow>* log,
                         const TrainHooks& hooks) {
    TinyLvlm<float> model = TinyLvlm<float>::initialize(model_config);
    if (config.steps == 0) return model;
    TrainConfig c = config;
    c.stage = Stage::kPretrain;
    TrainSession session(model, nullptr, data, c);
    for (int s = 0; s < c.steps; ++s) {
        const LogRow row = session.step();
        if (log != nullptr) log->push_back(row);
        if (hooks.on_log) hooks.on_log(row);
        if (hooks.on_eval && session.steps_done() % c.eval_every == 0) {
            hooks.on_eval(session.steps_done(), model, nullptr);
        }
    }
    return model;
}

AdapterSet<float> adapt(const TinyLvlm<float>& base, AdapterSet<float> adapters,
                        const std::vector<DatasetRecord>& data, const TrainConfig& config,
                        std::vector<LogRow>* log, const TrainHooks& hooks) {
    TinyLvlm<float> frozen = base;
    const std::uint64_t before = base.params().hash();
    TrainConfig c = config;
    c.stage = Stage::kAdapt;
    TrainSession session(frozen, &adapters, data, c);
    for (int s = 0; s < c.steps; ++s) {
        const LogRow row = session.step();
        if (log != nullptr) log->push_back(row);
        if (hooks.on_log) hooks.on_log(row);
        if (hooks.on_eval && session.steps_done() % c.eval_every == 0) {
            hooks.on_eval(session.steps_done(), frozen, &adapters);
        }
    }
    session.check_frozen_base();
    require(frozen.params().hash() == before && base.params().hash() == before, ErrorCode::kInternal,
            "frozen base parameters changed during adaptation");
    return adapters;
}

}  // namespace disclvlm
