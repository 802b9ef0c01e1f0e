// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Symmetric in-batch contrastive loss over summary-token embeddings and the
// next-token loss over long-caption tokens.

#pragma once

#include "tensor.hpp"
#include "tokenizer.hpp"

#include <cstdint>
#include <span>

namespace disclvlm {

struct LossValue {
    double total = 0.0;
    double contrastive = 0.0;
    double ar_ce = 0.0;
    double lambda_ar = 0.0;
};

LossValue total_loss(double contrastive, double ar_ce, double lambda_ar);

// Similarity s[k][j] = <image k, text j>.
template <typename T>
Mat<T> similarity_matrix(const Mat<T>& image, const Mat<T>& text);

template <typename T>
struct ContrastiveGrad {
    Mat<T> d_image;
    Mat<T> d_text;
    double d_temperature = 0.0;
};

// (1/b) sum_k [-log softmax_row(s/t)[k,k] - log softmax_col(s/t)[k,k]].
// Rows must be unit-norm (within 1e-4).
template <typename T>
double contrastive_loss(const Mat<T>& image, const Mat<T>& text, double temperature,
                        ContrastiveGrad<T>* grad = nullptr);

// Mean NLL of targets[i] under softmax(logits[i - 1]) over positions with
// caption_mask[i] set. logits has one row per sequence position.
template <typename T>
double ar_loss(const Mat<T>& logits, std::span<const TokenId> targets,
               std::span<const std::uint8_t> caption_mask, Mat<T>* d_logits = nullptr);

// Row i of logits predicts targets[i]; used on the gathered AR positions.
template <typename T>
double next_token_nll(const Mat<T>& logits, std::span<const TokenId> targets,
                      Mat<T>* d_logits = nullptr);

}  // namespace disclvlm
