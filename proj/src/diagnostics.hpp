// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analysis instruments: next-token entropy at the summary token, cumulative
// explained variance of embedding matrices, prompt-quality rank correlation,
// summary-to-vision attention density and top-k decoded tokens.

#pragma once

#include "evalsuite.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace disclvlm {

// -sum p ln p with 0 ln 0 = 0. p must be non-negative and sum to 1 (1e-6).
double entropy(std::span<const double> p);

// curve[i] = fraction of total variance explained by the i + 1 largest
// eigenvalues of the centered covariance; min(N, d) entries.
std::vector<double> cumulative_variance(const Mat<double>& embeddings);

// Smallest number of components whose cumulative share reaches `fraction`.
int components_for(std::span<const double> curve, double fraction);

// Spearman rank correlation; tied values share their average rank.
double spearman(std::span<const double> x, std::span<const double> y);

// (sum p)^2 / (V sum p^2): 1 for uniform, 1/V for one-hot.
double participation_ratio(std::span<const double> p);

struct HeadDensity {
    int layer = 0;
    int head = 0;
    double entropy = 0.0;
    double participation_ratio = 0.0;
};

struct AttentionDensityReport {
    std::vector<HeadDensity> heads;
    double mean_participation_ratio = 0.0;
    double mean_entropy = 0.0;
};

// The summary token's attention row restricted to the vision keys and
// renormalized, averaged over rows, per layer and head.
AttentionDensityReport attention_density(const TinyLvlm<float>& model,
                                         const AdapterSet<float>* adapters,
                                         const AssembledBatch& image_rows);

std::vector<std::pair<std::string, double>> topk_decoded(const TinyLvlm<float>& model,
                                                         const AdapterSet<float>* adapters,
                                                         const AssembledBatch& row, int k);

struct ProbePrompt {
    std::string id;
    std::string image;
    std::string text;
};

// Grammar-built prompt variants over the synthetic vocabulary.
std::vector<ProbePrompt> default_probe_prompts();
std::vector<ProbePrompt> read_probe_prompts(const std::string& path);

struct PromptProbeRow {
    std::string id;
    double mean_entropy = 0.0;  // over image and text rows of the probe set
    double r1 = 0.0;            // mean of t2i and i2t R@1
    std::vector<double> image_cumvar;
    std::vector<double> text_cumvar;
};

struct PromptProbeReport {
    std::vector<PromptProbeRow> prompts;
    double spearman_entropy_r1 = 0.0;
};

// Hard prompts only; soft prompts in `adapters` are ignored.
PromptProbeReport prompt_probe(const TinyLvlm<float>& model, const AdapterSet<float>* adapters,
                               std::span<const ProbePrompt> prompts,
                               std::span<const DatasetRecord> probe);

// Base (hard prompts) against base + adapters on the same held-out scenes:
// components needed for 90% of image-embedding variance and mean summary to
// vision participation ratio. A side passes unless the adapted value drops by
// more than `tolerance` relative to the base.
struct DensityComparison {
    int components_base = 0;
    int components_adapted = 0;
    double participation_base = 0.0;
    double participation_adapted = 0.0;
    std::vector<double> cumvar_base;
    std::vector<double> cumvar_adapted;
    bool components_ok = false;
    bool participation_ok = false;
};

DensityComparison compare_density(const TinyLvlm<float>& model, const AdapterSet<float>& adapters,
                                  std::span<const DatasetRecord> rows, double tolerance = 0.05);

nlohmann::json to_json(const PromptProbeReport& report);
nlohmann::json to_json(const DensityComparison& c);
nlohmann::json to_json(const AttentionDensityReport& report);
void write_prompt_csv(std::ostream& out, const PromptProbeReport& report);
void write_cumvar_csv(std::ostream& out, const PromptProbeReport& report);
void write_attention_csv(std::ostream& out, const AttentionDensityReport& report);

}  // namespace disclvlm
