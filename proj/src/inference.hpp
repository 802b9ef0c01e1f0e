// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Read-only model queries: full forward outputs, summary-token embeddings,
// cosine similarity and the next-token distribution at the summary token.

#pragma once

#include "engine.hpp"

#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace disclvlm {

// Non-deduced, so callers can pass nullptr for "no adapters".
template <typename T>
using AdapterPtr = const std::type_identity_t<AdapterSet<T>>*;

template <typename T>
struct ForwardOutput {
    Mat<T> hidden;  // [length x model_dim], after the final layer norm
    Mat<T> logits;  // [length x vocab]
    std::vector<Mat<T>> attention;  // layer * num_heads + head, when captured
};

template <typename T>
std::vector<ForwardOutput<T>> forward(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                                      const AssembledBatch& batch, bool capture_attention = false);

template <typename T>
struct Embedding {
    Vec<T> vector;
    Modality modality = Modality::kImage;
};

// Unit-normalized hidden state at each row's first <out_token>, one row per
// batch row. Large batches are processed in chunks.
template <typename T>
Mat<T> embed_rows(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                  const AssembledBatch& batch);

// Single-row embedding; batch must hold exactly one row.
template <typename T>
Embedding<T> embed(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                   const AssembledBatch& batch);

template <typename T>
T similarity(const Embedding<T>& image, const Embedding<T>& text);

// Softmax of the logits at each row's first <out_token>: [rows x vocab].
template <typename T>
Mat<T> next_token_distribution(const TinyLvlm<T>& model, AdapterPtr<T> adapters,
                               const AssembledBatch& batch);

// k largest entries, descending, ties by lower index.
std::vector<std::pair<int, double>> top_k(std::span<const double> probs, int k);

}  // namespace disclvlm
