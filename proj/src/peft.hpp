// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter-efficient adaptation: modality-specific soft prompts that replace
// the hard-prompt token embeddings, and low-rank adapters on the decoder's
// linear maps (optionally also on the vision adapter).

#pragma once

#include "model.hpp"
#include "tokenizer.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace disclvlm {

inline constexpr std::string_view kDefaultImagePrompt = "summarize the provided image in one word :";
inline constexpr std::string_view kDefaultTextPrompt = "summarize the provided text in one word :";

enum class Modality { kImage = 0, kText = 1 };

std::string_view modality_name(Modality m);

template <typename T>
struct SoftPrompt {
    Modality modality = Modality::kImage;
    Mat<T> vectors;                      // [n x model_dim]
    std::vector<TokenId> source_prompt;  // n ids
};

// Copies the embedding-table rows of the tokenized prompt.
template <typename T>
SoftPrompt<T> init_soft_prompt(const TinyLvlm<T>& model, Modality modality,
                               std::string_view prompt_text);

template <typename T>
struct LoraAdapter {
    std::string target;
    Mat<T> down;  // A: [rank x in_dim]
    Mat<T> up;    // B: [out_dim x rank]
    double alpha = 16.0;

    int rank() const { return static_cast<int>(down.rows()); }
    T scale() const { return static_cast<T>(alpha / rank()); }
};

struct LoraOptions {
    int rank = 8;
    double alpha = 16.0;
    double init_sigma = 0.02;
};

// Down factor Gaussian, up factor zero. Rejects rank >= min(in, out).
template <typename T>
LoraAdapter<T> make_lora(std::string target, int in_dim, int out_dim, const LoraOptions& options,
                         std::uint64_t seed);

// base_output + (alpha/r) * input A^T B^T, with base_output = input W^T.
template <typename T>
Mat<T> apply_lora(const LoraAdapter<T>& adapter, const Mat<T>& base_weight, const Mat<T>& input);

template <typename T>
Mat<T> lora_delta(const LoraAdapter<T>& adapter);  // (alpha/r) B A

template <typename T>
Mat<T> merge(const LoraAdapter<T>& adapter, const Mat<T>& base_weight);
template <typename T>
Mat<T> unmerge(const LoraAdapter<T>& adapter, const Mat<T>& merged_weight);

struct TrainableFlags {
    bool soft_prompts = true;
    bool lora = true;
    bool vision_lora = true;
    bool temperature = true;
};

struct AdapterOptions {
    bool soft_prompts = true;
    bool lora = true;
    bool vision_lora = true;
    LoraOptions lora_options;
    std::string image_prompt{kDefaultImagePrompt};
    std::string text_prompt{kDefaultTextPrompt};
    double init_temperature = 0.07;
    std::uint64_t seed = 0;
};

// Soft prompts, low-rank adapters and the contrastive logit scale, stored in
// one name-addressed ParamSet so the optimizer and checkpoints treat them
// uniformly. Names live under the "peft/" namespace.
template <typename T>
class AdapterSet {
public:
    struct LoraSlot {
        std::string target;
        int target_slot = -1;  // index into the model's ParamSet
        int down = -1;
        int up = -1;
        double alpha = 16.0;
    };
    struct PromptSlot {
        int vectors = -1;
        std::vector<TokenId> source_prompt;
    };

    static constexpr double kMaxLogitScale = 100.0;

    AdapterSet() = default;

    static AdapterSet create(const TinyLvlm<T>& model, const AdapterOptions& options);

    void set_soft_prompt(const SoftPrompt<T>& prompt);
    void add_lora(const TinyLvlm<T>& model, LoraAdapter<T> adapter);
    // Rebuilds slot tables from parameter names after a load.
    static AdapterSet from_params(const TinyLvlm<T>& model, ParamSet<T> params,
                                  const nlohmann::json& meta);
    nlohmann::json metadata() const;

    const ParamSet<T>& params() const { return params_; }
    ParamSet<T>& params() { return params_; }

    const std::optional<PromptSlot>& prompt(Modality m) const {
        return prompts_[static_cast<std::size_t>(m)];
    }
    const std::vector<LoraSlot>& lora() const { return lora_; }
    // Adapter attached to a model parameter slot, or nullptr.
    const LoraSlot* lora_for(int model_slot) const;
    std::optional<LoraAdapter<T>> lora_adapter(const std::string& target) const;

    int log_scale_slot() const { return log_scale_; }
    // exp(log_scale) clamped at kMaxLogitScale; temperature = 1 / scale.
    T logit_scale() const;
    bool logit_scale_clamped() const;

    TrainableFlags& trainable() { return trainable_; }
    const TrainableFlags& trainable() const { return trainable_; }
    // Whether gradients of parameter i should be applied.
    bool is_trainable(int i) const;

    template <typename U>
    AdapterSet<U> cast() const;

private:
    template <typename>
    friend class AdapterSet;

    ParamSet<T> params_;
    std::array<std::optional<PromptSlot>, 2> prompts_;
    std::vector<LoraSlot> lora_;
    std::vector<int> lora_by_model_slot_;
    int log_scale_ = -1;
    TrainableFlags trainable_;
};

// Nearest vocabulary entry (cosine) for each soft-prompt vector.
template <typename T>
std::vector<TokenId> decode_soft_prompt(const TinyLvlm<T>& model, const Mat<T>& vectors);

template <typename T>
template <typename U>
AdapterSet<U> AdapterSet<T>::cast() const {
    AdapterSet<U> out;
    out.params_ = params_.template cast<U>();
    for (std::size_t m = 0; m < 2; ++m) {
        if (prompts_[m]) {
            out.prompts_[m] = typename AdapterSet<U>::PromptSlot{prompts_[m]->vectors,
                                                                 prompts_[m]->source_prompt};
        }
    }
    for (const auto& s : lora_) {
        out.lora_.push_back(
            typename AdapterSet<U>::LoraSlot{s.target, s.target_slot, s.down, s.up, s.alpha});
    }
    out.lora_by_model_slot_ = lora_by_model_slot_;
    out.log_scale_ = log_scale_;
    out.trainable_ = trainable_;
    return out;
}

}  // namespace disclvlm
