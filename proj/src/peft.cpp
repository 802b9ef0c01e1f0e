// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "peft.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>

namespace disclvlm {

namespace {

constexpr const char* kLogScaleName = "peft/contrastive.log_scale";

std::string prompt_name(Modality m) {
    return std::string("peft/soft_prompt.") + std::string(modality_name(m));
}

std::string lora_name(const std::string& target, const char* factor) {
    return "peft/lora." + target + "." + factor;
}

}  // namespace

std::string_view modality_name(Modality m) {
    return m == Modality::kImage ? "image" : "text";
}

template <typename T>
SoftPrompt<T> init_soft_prompt(const TinyLvlm<T>& model, Modality modality,
                               std::string_view prompt_text) {
    const auto ids = Tokenizer::instance().tokenize(prompt_text);
    require(!ids.empty(), ErrorCode::kParameter, "soft prompt needs a non-empty source prompt");
    const auto& table = model.params()[model.slots().tok_emb];
    SoftPrompt<T> p;
    p.modality = modality;
    p.source_prompt = ids;
    p.vectors.resize(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] < table.rows(), ErrorCode::kVocabulary, "prompt token outside model vocabulary");
        p.vectors.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    }
    return p;
}

template <typename T>
LoraAdapter<T> make_lora(std::string target, int in_dim, int out_dim, const LoraOptions& options,
                         std::uint64_t seed) {
    require(options.rank >= 1 && options.rank < std::min(in_dim, out_dim), ErrorCode::kParameter,
            "lora rank must satisfy 1 <= r < min(in_dim, out_dim) for '" + target + "'");
    require(options.alpha > 0.0, ErrorCode::kParameter, "lora alpha must be positive");
    Rng rng = make_rng(seed, "lora-init:" + target);
    LoraAdapter<T> a;
    a.target = std::move(target);
    a.alpha = options.alpha;
    a.down.resize(options.rank, in_dim);
    for (Eigen::Index i = 0; i < a.down.size(); ++i) {
        a.down.data()[i] = static_cast<T>(options.init_sigma * gaussian(rng));
    }
    a.up = Mat<T>::Zero(out_dim, options.rank);
    return a;
}

template <typename T>
Mat<T> apply_lora(const LoraAdapter<T>& adapter, const Mat<T>& base_weight, const Mat<T>& input) {
    require(input.cols() == adapter.down.cols() && base_weight.cols() == input.cols() &&
                base_weight.rows() == adapter.up.rows(),
            ErrorCode::kShape, "apply_lora: input width does not match adapter in_dim");
    Mat<T> out = input * base_weight.transpose();
    const Mat<T> projected = input * adapter.down.transpose();
    out.noalias() += adapter.scale() * (projected * adapter.up.transpose());
    return out;
}

template <typename T>
Mat<T> lora_delta(const LoraAdapter<T>& adapter) {
    return adapter.scale() * (adapter.up * adapter.down);
}

template <typename T>
Mat<T> merge(const LoraAdapter<T>& adapter, const Mat<T>& base_weight) {
    require(base_weight.rows() == adapter.up.rows() && base_weight.cols() == adapter.down.cols(),
            ErrorCode::kShape, "merge: adapter shape does not match base weight");
    return base_weight + lora_delta(adapter);
}

template <typename T>
Mat<T> unmerge(const LoraAdapter<T>& adapter, const Mat<T>& merged_weight) {
    require(merged_weight.rows() == adapter.up.rows() &&
                merged_weight.cols() == adapter.down.cols(),
            ErrorCode::kShape, "unmerge: adapter shape does not match weight");
    return merged_weight - lora_delta(adapter);
}

template <typename T>
AdapterSet<T> AdapterSet<T>::create(const TinyLvlm<T>& model, const AdapterOptions& options) {
    AdapterSet set;
    set.lora_by_model_slot_.assign(model.params().size(), -1);
    if (options.soft_prompts) {
        set.set_soft_prompt(init_soft_prompt(model, Modality::kImage, options.image_prompt));
        set.set_soft_prompt(init_soft_prompt(model, Modality::kText, options.text_prompt));
    }
    if (options.lora) {
        for (const auto& name : adaptable_linear_names(model.config(), false)) {
            const auto& w = model.params()[model.params().index(name)];
            set.add_lora(model, make_lora<T>(name, static_cast<int>(w.cols()),
                                             static_cast<int>(w.rows()), options.lora_options,
                                             options.seed));
        }
    }
    if (options.vision_lora) {
        const auto& w = model.params()[model.slots().vis_w];
        set.add_lora(model, make_lora<T>("vision.w", static_cast<int>(w.cols()),
                                         static_cast<int>(w.rows()), options.lora_options,
                                         options.seed));
    }
    require(options.init_temperature > 0.0, ErrorCode::kParameter, "temperature must be positive");
    Mat<T> log_scale(1, 1);
    log_scale(0, 0) = static_cast<T>(std::log(1.0 / options.init_temperature));
    set.log_scale_ = set.params_.add(kLogScaleName, log_scale);
    set.trainable_ = TrainableFlags{options.soft_prompts, options.lora, options.vision_lora, true};
    return set;
}

template <typename T>
void AdapterSet<T>::set_soft_prompt(const SoftPrompt<T>& prompt) {
    const std::string name = prompt_name(prompt.modality);
    require(static_cast<std::size_t>(prompt.vectors.rows()) == prompt.source_prompt.size(),
            ErrorCode::kShape, "soft prompt length must equal its source prompt length");
    const int existing = params_.find(name);
    int slot = existing;
    if (existing >= 0) {
        params_[existing] = prompt.vectors;
    } else {
        slot = params_.add(name, prompt.vectors);
    }
    prompts_[static_cast<std::size_t>(prompt.modality)] = PromptSlot{slot, prompt.source_prompt};
}

template <typename T>
void AdapterSet<T>::add_lora(const TinyLvlm<T>& model, LoraAdapter<T> adapter) {
    const int target = model.params().find(adapter.target);
    require(target >= 0, ErrorCode::kParameter,
            "adapter target '" + adapter.target + "' does not exist in the model");
    const auto& w = model.params()[target];
    require(w.rows() == adapter.up.rows() && w.cols() == adapter.down.cols(), ErrorCode::kShape,
            "adapter shape does not match target '" + adapter.target + "'");
    require(adapter.rank() < std::min(w.rows(), w.cols()), ErrorCode::kParameter,
            "lora rank must be below min(in_dim, out_dim)");
    if (lora_by_model_slot_.size() < model.params().size()) {
        lora_by_model_slot_.resize(model.params().size(), -1);
    }
    require(lora_by_model_slot_[static_cast<std::size_t>(target)] < 0, ErrorCode::kParameter,
            "duplicate adapter for '" + adapter.target + "'");
    LoraSlot slot;
    slot.target = adapter.target;
    slot.target_slot = target;
    slot.alpha = adapter.alpha;
    slot.down = params_.add(lora_name(adapter.target, "down"), std::move(adapter.down));
    slot.up = params_.add(lora_name(adapter.target, "up"), std::move(adapter.up));
    lora_by_model_slot_[static_cast<std::size_t>(target)] = static_cast<int>(lora_.size());
    lora_.push_back(std::move(slot));
}

template <typename T>
const typename AdapterSet<T>::LoraSlot* AdapterSet<T>::lora_for(int model_slot) const {
    if (model_slot < 0 || static_cast<std::size_t>(model_slot) >= lora_by_model_slot_.size()) {
        return nullptr;
    }
    const int i = lora_by_model_slot_[static_cast<std::size_t>(model_slot)];
    return i < 0 ? nullptr : &lora_[static_cast<std::size_t>(i)];
}

template <typename T>
std::optional<LoraAdapter<T>> AdapterSet<T>::lora_adapter(const std::string& target) const {
    for (const auto& s : lora_) {
        if (s.target == target) {
            return LoraAdapter<T>{s.target, params_[s.down], params_[s.up], s.alpha};
        }
    }
    return std::nullopt;
}

template <typename T>
T AdapterSet<T>::logit_scale() const {
    if (log_scale_ < 0) return static_cast<T>(1.0 / 0.07);
    return std::min(std::exp(params_[log_scale_](0, 0)), static_cast<T>(kMaxLogitScale));
}

template <typename T>
bool AdapterSet<T>::logit_scale_clamped() const {
    return log_scale_ >= 0 && std::exp(params_[log_scale_](0, 0)) >= static_cast<T>(kMaxLogitScale);
}

template <typename T>
bool AdapterSet<T>::is_trainable(int i) const {
    if (i == log_scale_) return trainable_.temperature;
    for (const auto& p : prompts_) {
        if (p && p->vectors == i) return trainable_.soft_prompts;
    }
    for (const auto& s : lora_) {
        if (s.down == i || s.up == i) {
            return s.target == "vision.w" ? trainable_.vision_lora : trainable_.lora;
        }
    }
    return false;
}

template <typename T>
nlohmann::json AdapterSet<T>::metadata() const {
    nlohmann::json prompts = nlohmann::json::object();
    for (std::size_t m = 0; m < 2; ++m) {
        if (prompts_[m]) {
            prompts[std::string(modality_name(static_cast<Modality>(m)))] = prompts_[m]->source_prompt;
        }
    }
    nlohmann::json lora = nlohmann::json::array();
    for (const auto& s : lora_) {
        lora.push_back({{"target", s.target}, {"alpha", s.alpha}});
    }
    return {{"soft_prompts", prompts},
            {"lora", lora},
            {"trainable",
             {{"soft_prompts", trainable_.soft_prompts},
              {"lora", trainable_.lora},
              {"vision_lora", trainable_.vision_lora},
              {"temperature", trainable_.temperature}}}};
}

template <typename T>
AdapterSet<T> AdapterSet<T>::from_params(const TinyLvlm<T>& model, ParamSet<T> params,
                                         const nlohmann::json& meta) {
    AdapterSet set;
    set.lora_by_model_slot_.assign(model.params().size(), -1);
    try {
        for (const auto m : {Modality::kImage, Modality::kText}) {
            const std::string key(modality_name(m));
            if (!meta.at("soft_prompts").contains(key)) continue;
            SoftPrompt<T> p;
            p.modality = m;
            p.source_prompt = meta.at("soft_prompts").at(key).get<std::vector<TokenId>>();
            p.vectors = params[params.index(prompt_name(m))];
            require(p.vectors.cols() == model.config().model_dim, ErrorCode::kShape,
                    "soft prompt width differs from model_dim");
            set.set_soft_prompt(p);
        }
        for (const auto& l : meta.at("lora")) {
            const std::string target = l.at("target").get<std::string>();
            LoraAdapter<T> a{target, params[params.index(lora_name(target, "down"))],
                             params[params.index(lora_name(target, "up"))],
                             l.at("alpha").get<double>()};
            set.add_lora(model, std::move(a));
        }
        const auto& t = meta.at("trainable");
        set.trainable_ = TrainableFlags{t.at("soft_prompts").get<bool>(), t.at("lora").get<bool>(),
                                        t.at("vision_lora").get<bool>(),
                                        t.at("temperature").get<bool>()};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed adapter metadata: ") + e.what());
    }
    const int log_scale = params.find(kLogScaleName);
    if (log_scale >= 0) {
        set.log_scale_ = set.params_.add(kLogScaleName, params[log_scale]);
    }
    require(set.params_.size() == params.size(), ErrorCode::kParameter,
            "adapter checkpoint holds tensors not described by its metadata");
    return set;
}

template <typename T>
std::vector<TokenId> decode_soft_prompt(const TinyLvlm<T>& model, const Mat<T>& vectors) {
    const auto& table = model.params()[model.slots().tok_emb];
    const Vec<T> table_norms = table.rowwise().norm();
    std::vector<TokenId> out;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        const T vn = vectors.row(i).norm();
        TokenId best = 0;
        T best_sim = -std::numeric_limits<T>::infinity();
        for (Eigen::Index t = special::kCount; t < table.rows(); ++t) {
            const T denom = std::max(vn * table_norms(t), static_cast<T>(1e-30));
            const T sim = table.row(t).dot(vectors.row(i)) / denom;
            if (sim > best_sim) {
                best_sim = sim;
                best = static_cast<TokenId>(t);
            }
        }
        out.push_back(best);
    }
    return out;
}

#define DISCLVLM_INSTANTIATE_PEFT(T)                                                           \
    template SoftPrompt<T> init_soft_prompt(const TinyLvlm<T>&, Modality, std::string_view);   \
    template LoraAdapter<T> make_lora(std::string, int, int, const LoraOptions&, std::uint64_t); \
    template Mat<T> apply_lora(const LoraAdapter<T>&, const Mat<T>&, const Mat<T>&);           \
    template Mat<T> lora_delta(const LoraAdapter<T>&);                                         \
    template Mat<T> merge(const LoraAdapter<T>&, const Mat<T>&);                               \
    template Mat<T> unmerge(const LoraAdapter<T>&, const Mat<T>&);                             \
    template std::vector<TokenId> decode_soft_prompt(const TinyLvlm<T>&, const Mat<T>&);       \
    template class AdapterSet<T>;

DISCLVLM_INSTANTIATE_PEFT(float)
DISCLVLM_INSTANTIATE_PEFT(double)

}  // namespace disclvlm
