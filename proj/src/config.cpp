// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include "error.hpp"

#include <cstdlib>
#include <fstream>
#include <algorithm>
#include <set>

namespace disclvlm {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& section) {
    require(j.is_object(), ErrorCode::kConfig, "config section '" + section + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        require(ok.count(k) == 1, ErrorCode::kConfig,
                "unknown config key '" + (section.empty() ? k : section + "." + k) + "'");
    }
}

template <typename T>
void set_if(const nlohmann::json& j, const char* key, T& value) {
    if (j.contains(key)) value = j.at(key).get<T>();
}

}  // namespace

ProjectConfig::ProjectConfig() {
    pretrain.stage = Stage::kPretrain;
    pretrain.batch_size = 16;
    pretrain.steps = 2000;
    pretrain.learning_rate = 3e-3;
    pretrain.lambda_ar = 1.0;
    adapt.stage = Stage::kAdapt;
    adapt.batch_size = 32;
    adapt.steps = 2000;
    adapt.learning_rate = 2e-3;
    adapt.lambda_ar = 1.0;
}

void ProjectConfig::validate() const {
    model_config().validate();
    pretrain_config().validate();
    adapt_config().validate();
    require(data.n_train >= 1 && data.n_heldout >= 2, ErrorCode::kConfig, "dataset sizes too small");
    require(peft.rank >= 1 && peft.alpha > 0.0 && peft.init_temperature > 0.0, ErrorCode::kConfig,
            "invalid adapter settings");
    require(!eval.gallery_sizes.empty() && !eval.ks.empty(), ErrorCode::kConfig,
            "eval needs gallery sizes and k values");
    for (const int g : eval.gallery_sizes) {
        require(g >= 1 && g <= data.n_heldout, ErrorCode::kConfig,
                "gallery size must lie in [1, data.n_heldout]");
    }
    for (const int k : eval.ks) require(k >= 1, ErrorCode::kConfig, "k must be positive");
    require(diagnostics.probe_pairs >= 2 && diagnostics.probe_pairs <= data.n_heldout &&
                diagnostics.attention_rows >= 1 && diagnostics.attention_rows <= data.n_heldout &&
                diagnostics.top_k >= 1,
            ErrorCode::kConfig, "invalid diagnostics settings");
}

ModelConfig ProjectConfig::model_config() const {
    ModelConfig m = model;
    m.seed = seed;
    if (m.vocab_size == 0) m.vocab_size = Tokenizer::instance().vocab_size();
    return m;
}

TrainConfig ProjectConfig::pretrain_config() const {
    TrainConfig t = pretrain;
    t.stage = Stage::kPretrain;
    t.seed = seed;
    return t;
}

TrainConfig ProjectConfig::adapt_config() const {
    TrainConfig t = adapt;
    t.stage = Stage::kAdapt;
    t.seed = seed;
    return t;
}

AdapterOptions ProjectConfig::adapter_options() const {
    AdapterOptions o;
    o.soft_prompts = peft.soft_prompts;
    o.lora = peft.lora;
    o.vision_lora = peft.vision_lora;
    o.lora_options = LoraOptions{peft.rank, peft.alpha, peft.init_sigma};
    o.image_prompt = peft.image_prompt;
    o.text_prompt = peft.text_prompt;
    o.init_temperature = peft.init_temperature;
    o.seed = seed;
    return o;
}

AblationSettings ProjectConfig::ablation_settings() const {
    AblationSettings s;
    s.model = model_config();
    s.pretrain = pretrain_config();
    s.adapt = adapt_config();
    s.peft = adapter_options();
    s.n_train = data.n_train;
    s.n_heldout = data.n_heldout;
    s.eval.gallery_size = *std::max_element(eval.gallery_sizes.begin(), eval.gallery_sizes.end());
    s.eval.compositional_records = eval.compositional_records;
    s.seeds = ablate.seeds;
    return s;
}

nlohmann::json to_json(const ProjectConfig& c) {
    nlohmann::json pretrain = c.pretrain;
    nlohmann::json adapt = c.adapt;
    for (auto* t : {&pretrain, &adapt}) {
        t->erase("stage");
        t->erase("seed");
    }
    nlohmann::json model = c.model;
    model.erase("seed");
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"model", model},
            {"data",
             {{"n_train", c.data.n_train}, {"n_heldout", c.data.n_heldout}, {"dataset", c.data.dataset}}},
            {"pretrain", pretrain},
            {"adapt", adapt},
            {"peft",
             {{"soft_prompts", c.peft.soft_prompts},
              {"lora", c.peft.lora},
              {"vision_lora", c.peft.vision_lora},
              {"rank", c.peft.rank},
              {"alpha", c.peft.alpha},
              {"init_sigma", c.peft.init_sigma},
              {"init_temperature", c.peft.init_temperature},
              {"image_prompt", c.peft.image_prompt},
              {"text_prompt", c.peft.text_prompt}}},
            {"eval",
             {{"gallery_sizes", c.eval.gallery_sizes},
              {"ks", c.eval.ks},
              {"compositional_records", c.eval.compositional_records}}},
            {"diagnostics",
             {{"probe_pairs", c.diagnostics.probe_pairs},
              {"attention_rows", c.diagnostics.attention_rows},
              {"top_k", c.diagnostics.top_k},
              {"prompts", c.diagnostics.prompts}}},
            {"ablate", {{"seeds", c.ablate.seeds}, {"configs", c.ablate.configs}}}};
}

ProjectConfig from_json(const nlohmann::json& j, ProjectConfig c) {
    try {
        check_keys(j, {"seed", "out_dir", "model", "data", "pretrain", "adapt", "peft", "eval",
                       "diagnostics", "ablate"},
                   "");
        set_if(j, "seed", c.seed);
        set_if(j, "out_dir", c.out_dir);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            check_keys(m, {"vocab_size", "model_dim", "num_layers", "num_heads", "mlp_dim",
                           "max_seq_len", "num_vision_tokens", "vision_feature_dim"},
                       "model");
            from_json(m, c.model);
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, {"n_train", "n_heldout", "dataset"}, "data");
            set_if(d, "n_train", c.data.n_train);
            set_if(d, "n_heldout", c.data.n_heldout);
            set_if(d, "dataset", c.data.dataset);
        }
        for (const char* stage : {"pretrain", "adapt"}) {
            if (!j.contains(stage)) continue;
            const auto& t = j.at(stage);
            check_keys(t, {"batch_size", "steps", "learning_rate", "warmup_steps", "min_lr_ratio",
                           "weight_decay", "grad_clip", "lambda_ar", "short_long_ratio", "contrast_both_out", "contrast_long_captions",
                           "eval_every"},
                       stage);
            from_json(t, std::string(stage) == "pretrain" ? c.pretrain : c.adapt);
        }
        if (j.contains("peft")) {
            const auto& p = j.at("peft");
            check_keys(p, {"soft_prompts", "lora", "vision_lora", "rank", "alpha", "init_sigma",
                           "init_temperature", "image_prompt", "text_prompt"},
                       "peft");
            set_if(p, "soft_prompts", c.peft.soft_prompts);
            set_if(p, "lora", c.peft.lora);
            set_if(p, "vision_lora", c.peft.vision_lora);
            set_if(p, "rank", c.peft.rank);
            set_if(p, "alpha", c.peft.alpha);
            set_if(p, "init_sigma", c.peft.init_sigma);
            set_if(p, "init_temperature", c.peft.init_temperature);
            set_if(p, "image_prompt", c.peft.image_prompt);
            set_if(p, "text_prompt", c.peft.text_prompt);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            check_keys(e, {"gallery_sizes", "ks", "compositional_records"}, "eval");
            set_if(e, "gallery_sizes", c.eval.gallery_sizes);
            set_if(e, "ks", c.eval.ks);
            set_if(e, "compositional_records", c.eval.compositional_records);
        }
        if (j.contains("diagnostics")) {
            const auto& d = j.at("diagnostics");
            check_keys(d, {"probe_pairs", "attention_rows", "top_k", "prompts"}, "diagnostics");
            set_if(d, "probe_pairs", c.diagnostics.probe_pairs);
            set_if(d, "attention_rows", c.diagnostics.attention_rows);
            set_if(d, "top_k", c.diagnostics.top_k);
            set_if(d, "prompts", c.diagnostics.prompts);
        }
        if (j.contains("ablate")) {
            const auto& a = j.at("ablate");
            check_keys(a, {"seeds", "configs"}, "ablate");
            set_if(a, "seeds", c.ablate.seeds);
            if (a.contains("configs")) {
                c.ablate.configs = a.at("configs").get<std::vector<AblationConfig>>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("invalid config: ") + e.what());
    }
    return c;
}

nlohmann::json to_json(const Overrides& o) {
    nlohmann::json j = nlohmann::json::object();
    if (o.seed) j["seed"] = *o.seed;
    if (o.out_dir) j["out_dir"] = *o.out_dir;
    if (o.n) j["n"] = *o.n;
    if (o.steps) j["steps"] = *o.steps;
    if (o.lambda_ar) j["lambda_ar"] = *o.lambda_ar;
    if (o.gallery_size) j["gallery_size"] = *o.gallery_size;
    if (o.prompts) j["prompts"] = *o.prompts;
    if (o.dataset) j["data"] = *o.dataset;
    if (o.out) j["out"] = *o.out;
    return j;
}

Overrides overrides_from_json(const nlohmann::json& j) {
    Overrides o;
    try {
        check_keys(j, {"seed", "out_dir", "n", "steps", "lambda_ar", "gallery_size", "prompts",
                       "data", "out"},
                   "overrides");
        if (j.contains("seed")) o.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("out_dir")) o.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("n")) o.n = j.at("n").get<int>();
        if (j.contains("steps")) o.steps = j.at("steps").get<int>();
        if (j.contains("lambda_ar")) o.lambda_ar = j.at("lambda_ar").get<double>();
        if (j.contains("gallery_size")) o.gallery_size = j.at("gallery_size").get<int>();
        if (j.contains("prompts")) o.prompts = j.at("prompts").get<std::string>();
        if (j.contains("data")) o.dataset = j.at("data").get<std::string>();
        if (j.contains("out")) o.out = j.at("out").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("invalid overrides: ") + e.what());
    }
    return o;
}

Overrides overrides_from_env() {
    Overrides o;
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (v == nullptr || *v == '\0') return std::nullopt;
        return std::string(v);
    };
    auto number = [](const std::string& name, const std::string& v, auto parse) {
        try {
            std::size_t used = 0;
            auto r = parse(v, &used);
            require(used == v.size(), ErrorCode::kConfig, "");
            return r;
        } catch (...) {
            fail(ErrorCode::kConfig, "environment variable " + name + " is not a valid number: '" + v + "'");
        }
    };
    auto to_u64 = [](const std::string& s, std::size_t* u) { return std::stoull(s, u); };
    auto to_int = [](const std::string& s, std::size_t* u) { return std::stoi(s, u); };
    auto to_dbl = [](const std::string& s, std::size_t* u) { return std::stod(s, u); };
    if (auto v = env("DISC_LVLM_SEED")) o.seed = number("DISC_LVLM_SEED", *v, to_u64);
    if (auto v = env("DISC_LVLM_OUT_DIR")) o.out_dir = *v;
    if (auto v = env("DISC_LVLM_N")) o.n = number("DISC_LVLM_N", *v, to_int);
    if (auto v = env("DISC_LVLM_STEPS")) o.steps = number("DISC_LVLM_STEPS", *v, to_int);
    if (auto v = env("DISC_LVLM_LAMBDA_AR")) o.lambda_ar = number("DISC_LVLM_LAMBDA_AR", *v, to_dbl);
    if (auto v = env("DISC_LVLM_GALLERY_SIZE")) o.gallery_size = number("DISC_LVLM_GALLERY_SIZE", *v, to_int);
    if (auto v = env("DISC_LVLM_PROMPTS")) o.prompts = *v;
    if (auto v = env("DISC_LVLM_DATA")) o.dataset = *v;
    return o;
}

void apply(ProjectConfig& c, const Overrides& o, const std::string& subcommand) {
    if (o.seed) c.seed = *o.seed;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.n) c.data.n_train = *o.n;
    if (o.steps) {
        if (subcommand == "pretrain" || subcommand == "ablate") c.pretrain.steps = *o.steps;
        if (subcommand == "adapt" || subcommand == "ablate") c.adapt.steps = *o.steps;
    }
    if (o.lambda_ar) c.adapt.lambda_ar = *o.lambda_ar;
    if (o.gallery_size) c.eval.gallery_sizes = {*o.gallery_size};
    if (o.prompts) c.diagnostics.prompts = *o.prompts;
    if (o.dataset) c.data.dataset = *o.dataset;
}

ProjectConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, "config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

}  // namespace disclvlm
