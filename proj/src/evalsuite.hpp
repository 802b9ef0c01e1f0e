// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Retrieval and compositionality evaluation on held-out synthetic scenes.

#pragma once

#include "inference.hpp"
#include "scene.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace disclvlm {

// Template options for embedding with a given adapter set: soft prompts are
// used for every modality that has one, hard prompts otherwise.
TemplateOptions inference_options(const ModelConfig& config, const AdapterSet<float>* adapters,
                                  const PromptPair& prompts = default_prompts());

Mat<float> embed_images(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                        std::span<const Scene> scenes, const TemplateOptions& options);
Mat<float> embed_texts(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                       std::span<const std::string> captions, const TemplateOptions& options);

struct Recall {
    double t2i = 0.0;  // text query, rank images (image retrieval)
    double i2t = 0.0;  // image query, rank texts (text retrieval)
};

// similarity[i][j]: image i vs text j, gold on the diagonal. The gold item
// ranks after every strictly higher entry and after equal entries with a
// lower index.
template <typename T>
Recall recall_at_k(const Mat<T>& similarity, int k);

struct RetrievalResult {
    int gallery_size = 0;
    std::map<int, Recall> recall_at;
    Mat<float> similarity;
};

RetrievalResult evaluate_retrieval(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                                   std::span<const DatasetRecord> gallery, std::span<const int> ks,
                                   const TemplateOptions& options);

struct CompositionalityItem {
    const Scene* scene = nullptr;
    std::string positive;
    std::string positive2;  // paraphrase; used by ITT scoring
    std::string negative;
    NegativeCategory category = NegativeCategory::kReplaceObject;
};

// One item per (held-out record, hard negative).
std::vector<CompositionalityItem> compositionality_items(std::span<const DatasetRecord> records);

struct Accuracy {
    double accuracy = 0.0;
    int count = 0;
};

struct CompositionalityResult {
    std::map<std::string, Accuracy> category;  // "replace-object", ...
    std::map<std::string, Accuracy> group;     // "replace", "swap", "add"
    std::map<std::string, Accuracy> itt;       // ITT accuracy per category
    std::map<std::string, Accuracy> itt_group;
};

// Strict inequality; ties count as failures.
std::vector<bool> score_pairs(std::span<const float> positive, std::span<const float> negative);
std::vector<bool> score_itt(std::span<const float> positive1, std::span<const float> positive2,
                            std::span<const float> negative);

CompositionalityResult compositionality_score(const TinyLvlm<float>& model,
                                              const AdapterSet<float>* adapters,
                                              std::span<const CompositionalityItem> items,
                                              const TemplateOptions& options);

// Aggregates per-item outcomes; unknown category names raise kParameter.
std::map<std::string, Accuracy> aggregate(std::span<const std::string> categories,
                                          const std::vector<bool>& correct, bool by_group);

struct EvalReport {
    std::vector<RetrievalResult> retrieval;
    CompositionalityResult compositionality;
};

nlohmann::json to_json(const EvalReport& report);
// Columns mirror a retrieval table: image retrieval R@1/R@10, text retrieval R@1/R@10.
void write_retrieval_csv(std::ostream& out, const EvalReport& report);
// Replace/Swap/Add groups followed by the per-category breakdown.
void write_compositionality_csv(std::ostream& out, const EvalReport& report);

}  // namespace disclvlm
