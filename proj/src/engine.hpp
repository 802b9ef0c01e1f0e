// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batched causal decoder pass with a hand-written backward. Rows of an
// AssembledBatch are concatenated without padding; linear maps run over the
// whole token stack at once and attention runs per row and head.

#pragma once

#include "model.hpp"
#include "peft.hpp"
#include "templater.hpp"

#include <vector>

namespace disclvlm {

enum class LogitSelection {
    kNone,
    kAll,
    kArTargets,  // positions i-1 for every AR-masked position i
    kAnchors,    // the first <out_token> of each row
};

template <typename T>
struct Gradients {
    ParamSet<T> model;     // empty when the base is frozen
    ParamSet<T> adapters;  // empty when no adapters are trained

    static Gradients for_training(const TinyLvlm<T>& model, const AdapterSet<T>* adapters,
                                  bool base_trainable);
    void set_zero();
};

template <typename T>
class DecoderPass {
public:
    DecoderPass(const TinyLvlm<T>& model, const AdapterSet<T>* adapters);

    void forward(const AssembledBatch& batch, LogitSelection selection);

    // d_hidden: gradient w.r.t. the final normalized hidden states [tokens x
    // model_dim] (may be empty); d_logits: gradient w.r.t. logits() (may be empty).
    void backward(const Mat<T>& d_hidden, const Mat<T>& d_logits, Gradients<T>& grads) const;

    int num_rows() const { return static_cast<int>(offsets_.size()); }
    int offset(int row) const { return offsets_[static_cast<std::size_t>(row)]; }
    int length(int row) const { return lengths_[static_cast<std::size_t>(row)]; }
    int total_tokens() const { return total_; }

    const Mat<T>& hidden() const { return final_hidden_; }  // after the final layer norm
    const Mat<T>& logits() const { return logits_; }
    const std::vector<int>& logit_positions() const { return logit_positions_; }

    // Causal attention probabilities of one row and head: [length x length].
    const Mat<T>& attention(int layer, int row, int head) const;

private:
    struct LinearCache {
        Mat<T> projected;  // x A^T when an adapter is attached
    };
    struct LayerCache {
        Mat<T> input;
        LayerNormCache<T> ln1;
        Mat<T> normed1;
        Mat<T> q, k, v;
        std::vector<Mat<T>> probs;  // row * heads + head
        Mat<T> context;
        Mat<T> mid;
        LayerNormCache<T> ln2;
        Mat<T> normed2;
        Mat<T> pre_act;
        Mat<T> gelu_tanh;
        Mat<T> act;
        LinearCache lq, lk, lv, lo, lup, ldown;
    };

    void linear_forward(const Mat<T>& x, int weight_slot, int bias_slot, Mat<T>& y,
                        LinearCache& cache) const;
    void linear_backward(const Mat<T>& dy, const Mat<T>& x, int weight_slot, int bias_slot,
                         const LinearCache& cache, Mat<T>* dx, Gradients<T>& grads) const;

    const TinyLvlm<T>& model_;
    const AdapterSet<T>* adapters_;

    const AssembledBatch* batch_ = nullptr;
    std::vector<int> offsets_;
    std::vector<int> lengths_;
    int total_ = 0;

    Mat<T> vision_input_;  // stacked scene features of all vision slots
    std::vector<int> vision_positions_;
    Mat<T> vision_out_;
    LinearCache vision_cache_;

    std::vector<LayerCache> layers_;
    Mat<T> residual_out_;
    LayerNormCache<T> final_ln_;
    Mat<T> final_hidden_;
    std::vector<int> logit_positions_;
    Mat<T> logits_;
};

extern template struct Gradients<float>;
extern template struct Gradients<double>;
extern template class DecoderPass<float>;
extern template class DecoderPass<double>;

}  // namespace disclvlm
