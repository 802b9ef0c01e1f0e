// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// The unified training objective on an assembled batch: contrastive loss
// between the image and text summary tokens plus lambda times the next-token
// loss over the long-caption spans, with gradients through the decoder.

#pragma once

#include "engine.hpp"
#include "losses.hpp"

#include <type_traits>

namespace disclvlm {

struct ObjectiveOptions {
    bool contrastive = true;
    double lambda_ar = 1.0;
    // Used only when no adapter set (and hence no learnable scale) is present.
    double temperature = 0.07;
    // Average the contrastive term over both image <out_token>s (the second
    // one follows the long caption); rows with a single one use it twice.
    bool both_out = false;
};

// Runs forward (and backward when grads is non-null) on the batch. Image row
// k is paired with text row k in order of appearance.
template <typename T>
LossValue evaluate_objective(const TinyLvlm<T>& model, const AdapterSet<T>* adapters,
                             const AssembledBatch& batch, const ObjectiveOptions& options,
                             std::type_identity_t<Gradients<T>>* grads);

extern template LossValue evaluate_objective(const TinyLvlm<float>&, const AdapterSet<float>*,
                                             const AssembledBatch&, const ObjectiveOptions&,
                                             Gradients<float>*);
extern template LossValue evaluate_objective(const TinyLvlm<double>&, const AdapterSet<double>*,
                                             const AssembledBatch&, const ObjectiveOptions&,
                                             Gradients<double>*);

}  // namespace disclvlm
