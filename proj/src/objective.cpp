// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "objective.hpp"

#include "error.hpp"

#include <cmath>

namespace disclvlm {

template <typename T>
LossValue evaluate_objective(const TinyLvlm<T>& model, const AdapterSet<T>* adapters,
                             const AssembledBatch& batch, const ObjectiveOptions& options,
                             std::type_identity_t<Gradients<T>>* grads) {
    const bool use_ar = options.lambda_ar > 0.0;
    require(options.contrastive || use_ar, ErrorCode::kParameter, "objective has no active term");

    DecoderPass<T> pass(model, adapters);
    pass.forward(batch, use_ar ? LogitSelection::kArTargets : LogitSelection::kNone);
    const int d = model.config().model_dim;

    Mat<T> d_hidden;
    double contrastive = 0.0;
    if (options.contrastive) {
        std::vector<int> image_pos;
        std::vector<int> trailing_pos;
        std::vector<int> text_pos;
        for (int r = 0; r < pass.num_rows(); ++r) {
            const auto& row = batch.rows[static_cast<std::size_t>(r)];
            require(row.anchor >= 0, ErrorCode::kTemplate, "row without <out_token>");
            if (row.modality == Modality::kImage) {
                image_pos.push_back(pass.offset(r) + row.anchor);
                trailing_pos.push_back(pass.offset(r) + row.out_positions.back());
            } else {
                text_pos.push_back(pass.offset(r) + row.anchor);
            }
        }
        require(!image_pos.empty() && image_pos.size() == text_pos.size(), ErrorCode::kShape,
                "contrastive batches need equally many image and text rows");
        const auto b = static_cast<Eigen::Index>(image_pos.size());
        const double temperature =
            adapters != nullptr && adapters->log_scale_slot() >= 0
                ? 1.0 / static_cast<double>(adapters->logit_scale())
                : options.temperature;
        if (grads != nullptr) d_hidden = Mat<T>::Zero(pass.total_tokens(), d);
        double d_temperature = 0.0;

        auto normalized = [&](const std::vector<int>& pos, Mat<T>& unit, Vec<T>& norm) {
            unit.resize(b, d);
            norm.resize(b);
            for (Eigen::Index k = 0; k < b; ++k) {
                const auto h = pass.hidden().row(pos[static_cast<std::size_t>(k)]);
                norm(k) = h.norm();
                require(norm(k) > T(0), ErrorCode::kNumeric, "zero-norm summary state");
                unit.row(k) = h / norm(k);
            }
        };
        // Backprop through the L2 normalization: (g - u (u.g)) / |h|.
        auto scatter = [&](const std::vector<int>& pos, const Mat<T>& unit, const Vec<T>& norm,
                           const Mat<T>& g, T weight) {
            for (Eigen::Index k = 0; k < b; ++k) {
                const auto gk = g.row(k);
                const auto uk = unit.row(k);
                d_hidden.row(pos[static_cast<std::size_t>(k)]) += weight * (gk - uk * uk.dot(gk)) / norm(k);
            }
        };

        Mat<T> text;
        Vec<T> text_norm;
        normalized(text_pos, text, text_norm);
        std::vector<const std::vector<int>*> image_sets = {&image_pos};
        if (options.both_out) image_sets.push_back(&trailing_pos);
        const T weight = T(1) / static_cast<T>(image_sets.size());
        for (const auto* pos : image_sets) {
            Mat<T> image;
            Vec<T> image_norm;
            normalized(*pos, image, image_norm);
            ContrastiveGrad<T> cg;
            contrastive += static_cast<double>(weight) *
                           contrastive_loss(image, text, temperature, grads != nullptr ? &cg : nullptr);
            if (grads != nullptr) {
                scatter(*pos, image, image_norm, cg.d_image, weight);
                scatter(text_pos, text, text_norm, cg.d_text, weight);
                d_temperature += static_cast<double>(weight) * cg.d_temperature;
            }
        }
        if (grads != nullptr && adapters != nullptr && adapters->log_scale_slot() >= 0 &&
            grads->adapters.size() != 0 && !adapters->logit_scale_clamped()) {
            // temperature = exp(-log_scale)
            grads->adapters[adapters->log_scale_slot()](0, 0) += static_cast<T>(-d_temperature * temperature);
        }
    }

    double ar_ce = 0.0;
    Mat<T> d_logits;
    if (use_ar) {
        std::vector<TokenId> targets;
        for (const auto& row : batch.rows) {
            for (int i = 1; i < row.length(); ++i) {
                if (row.ar_mask[static_cast<std::size_t>(i)] != 0) {
                    targets.push_back(row.tokens[static_cast<std::size_t>(i)]);
                }
            }
        }
        ar_ce = next_token_nll(pass.logits(), targets, grads != nullptr ? &d_logits : nullptr);
        if (grads != nullptr) d_logits *= static_cast<T>(options.lambda_ar);
    }

    if (grads != nullptr) {
        pass.backward(d_hidden, d_logits, *grads);
    }
    return total_loss(contrastive, ar_ce, options.lambda_ar);
}

template LossValue evaluate_objective(const TinyLvlm<float>&, const AdapterSet<float>*,
                                      const AssembledBatch&, const ObjectiveOptions&,
                                      Gradients<float>*);
template LossValue evaluate_objective(const TinyLvlm<double>&, const AdapterSet<double>*,
                                      const AssembledBatch&, const ObjectiveOptions&,
                                      Gradients<double>*);

}  // namespace disclvlm
