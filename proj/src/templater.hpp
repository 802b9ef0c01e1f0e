// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-modality templates:
//   image: USER: [image prompt] <image>... ASSISTANT: <out_token>
//          USER: describe the image in detail . ASSISTANT: <long caption> <out_token>
//   text:  USER: [text prompt] <short caption> ASSISTANT: <out_token>
// Inference-mode image rows stop at the first <out_token>.

#pragma once

#include "peft.hpp"
#include "scene.hpp"
#include "tokenizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace disclvlm {

inline constexpr std::string_view kDetailInstruction = "describe the image in detail .";

enum class Segment : std::uint8_t { kRole, kPrompt, kVision, kOut, kInstruction, kCaption };

std::string_view segment_name(Segment s);

enum class TemplateMode { kTraining, kInference };

struct Span {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
    bool empty() const { return end <= begin; }
};

struct TemplateRow {
    Modality modality = Modality::kText;
    std::vector<TokenId> tokens;  // kImage ids mark vision slots
    std::vector<Segment> segments;
    std::vector<std::uint8_t> ar_mask;  // 1 on long-caption tokens
    std::vector<int> out_positions;
    int anchor = -1;  // first <out_token>
    Span prompt;
    Span vision;
    Span caption;
    bool soft_prompt = false;  // replace prompt embeddings by the modality's soft prompt
    int features = -1;         // index into AssembledBatch::features
    std::uint64_t source = 0;  // provenance (scene seed)

    int length() const { return static_cast<int>(tokens.size()); }
};

struct PromptPair {
    std::vector<TokenId> image;
    std::vector<TokenId> text;
};

PromptPair default_prompts();
PromptPair make_prompt_pair(std::string_view image_prompt, std::string_view text_prompt);

struct TemplateOptions {
    TemplateMode mode = TemplateMode::kInference;
    PromptPair prompts = default_prompts();
    bool soft_image_prompt = false;
    bool soft_text_prompt = false;
    int max_seq_len = 256;
    int num_vision_tokens = kGridCells;
    // Text rows carry the long caption (contrastive collapse probe only).
    bool long_text_rows = false;
};

TemplateRow build_image_row(int features_index, std::span<const TokenId> long_caption,
                            const TemplateOptions& options);
TemplateRow build_text_row(std::span<const TokenId> short_caption, const TemplateOptions& options);

struct AssembledBatch {
    std::vector<TemplateRow> rows;
    std::vector<Mat<float>> features;

    int max_length() const;
    int total_tokens() const;
    // Row-major [rows x max_length] ids padded with <pad>.
    std::vector<std::vector<TokenId>> padded_tokens() const;
    std::vector<std::vector<std::uint8_t>> attention_mask() const;
    // Per-row annotated rendering: position | token | segment | masks.
    std::string dump() const;
};

struct CollateItem {
    const Scene* scene = nullptr;
    const CaptionPair* captions = nullptr;
    bool with_long = true;  // training mode only
};

// b image rows followed by b text rows; image row k and text row b + k come
// from the same scene.
AssembledBatch collate(std::span<const CollateItem> items, const SceneFeaturizer& featurizer,
                       const TemplateOptions& options);

// Image rows only (inference form), e.g. for gallery embedding.
AssembledBatch image_batch(std::span<const Scene> scenes, const SceneFeaturizer& featurizer,
                           const TemplateOptions& options);
AssembledBatch text_batch(std::span<const std::vector<TokenId>> captions,
                          const TemplateOptions& options);

}  // namespace disclvlm
